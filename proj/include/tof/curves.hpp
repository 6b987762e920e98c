// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <string>
#include <vector>

#include "tof/common.hpp"

namespace tof {

// Emitted light pulse sampled on a uniform time grid (ns). Values between
// samples are the piecewise-linear interpolant; zero outside the grid.
class PulseProfile {
 public:
  PulseProfile(std::vector<double> samples, double grid_step_ns);

  static PulseProfile trapezoid(double rise_ns, double plateau_ns, double fall_ns,
                                double amplitude, double grid_step_ns);

  double grid_step() const { return grid_step_; }
  const std::vector<double>& samples() const { return samples_; }
  double duration() const { return grid_step_ * static_cast<double>(samples_.size() - 1); }

  /// Exact integral of the interpolant over [a, b] (ns; zero outside support).
  double integrate(double a, double b) const;
  double total_area() const { return cumulative_.back(); }

  PulseProfile scaled(double factor) const;

 private:
  double value_at(double u) const;
  double cumulative_at(double u) const;

  std::vector<double> samples_;
  std::vector<double> cumulative_;  // integral from 0 to i*grid_step_
  double grid_step_;
};

// One shutter basis element: gate open during [delay, delay + width] (ns).
struct BoxcarElement {
  double delay_ns = 0.0;
  double width_ns = 0.0;  // zero width is allowed and yields a zero response
};

using BoxcarCatalog = std::vector<BoxcarElement>;

// Uniform evaluation grid over depth (cm). t_min must be positive: the
// distance decay 1/t^2 is singular at zero.
struct DepthGrid {
  double t_min = 50.0;
  double t_max = 500.0;
  int size = 1024;

  double t(int i) const {
    return t_min + (t_max - t_min) * static_cast<double>(i) / static_cast<double>(size - 1);
  }
};

inline double distance_decay(double t_cm) { return 1.0 / (t_cm * t_cm); }

// Basis response matrix Q (grid.size x catalog.size): column j holds the
// response of boxcar j to the pulse reflected from depth t, including the
// 1/t^2 decay.
Eigen::MatrixXd boxcar_basis_matrix(const BoxcarCatalog& catalog, const PulseProfile& pulse,
                                    const DepthGrid& grid);

struct ChebJet {
  double value = 0.0;
  double d1 = 0.0;
  double d2 = 0.0;
};

// Chebyshev series on [a, b] with analytic first and second derivatives.
class Chebyshev {
 public:
  Chebyshev() = default;
  Chebyshev(std::vector<double> coefficients, double a, double b);

  /// Least-squares fit of the given degree to (t, y) samples covering [a, b].
  static Chebyshev fit(const std::vector<double>& t, const std::vector<double>& y,
                       double a, double b, int degree);

  double value(double t) const;
  ChebJet eval(double t) const;

  double lo() const { return a_; }
  double hi() const { return b_; }
  int degree() const { return static_cast<int>(coef_.size()) - 1; }
  const std::vector<double>& coefficients() const { return coef_; }

  /// Max absolute residual over the fit samples; zero for hand-built series.
  double fit_error() const { return fit_error_; }

 private:
  void build_derivatives();
  void check_range(double t) const;

  std::vector<double> coef_;
  std::vector<double> dcoef_;
  std::vector<double> d2coef_;
  double a_ = -1.0, b_ = 1.0;
  double fit_error_ = 0.0;
};

// Calibrated or designed response curves: one Chebyshev evaluator per
// channel for C(t), the ambient direction A, and the valid depth range.
// Immutable after construction; concurrent reads are safe.
class ResponseCurveSet {
 public:
  ResponseCurveSet() = default;
  ResponseCurveSet(std::vector<Chebyshev> channels, Eigen::VectorXd ambient,
                   double cm_per_ns = kDepthCmPerNs);

  int channel_count() const { return static_cast<int>(channels_.size()); }
  Range valid_range() const { return {t_min_, t_max_}; }
  double cm_per_ns() const { return cm_per_ns_; }
  const Eigen::VectorXd& ambient() const { return ambient_; }
  const std::vector<Chebyshev>& channels() const { return channels_; }
  double fit_error() const { return fit_error_; }
  void set_fit_error(double e) { fit_error_ = e; }

  Eigen::VectorXd values(double t) const;
  void values_jet(double t, Eigen::VectorXd& value, Eigen::VectorXd& d1) const;

  FileMeta meta;

 private:
  std::vector<Chebyshev> channels_;
  Eigen::VectorXd ambient_;
  double t_min_ = 0.0, t_max_ = 0.0;
  double cm_per_ns_ = kDepthCmPerNs;
  double fit_error_ = 0.0;
};

// Combined response curves C = Q Z plus the ambient direction
// A_k = ambient_gain * sum_j Z_jk * width_j.
ResponseCurveSet compose_curves(const Eigen::MatrixXd& q, const Eigen::MatrixXi& z,
                                const BoxcarCatalog& catalog, const DepthGrid& grid,
                                int degree = 16, double ambient_gain = 1.0);

// Self-describing text format; write -> read -> write is byte-identical.
void write_curves(std::ostream& os, const ResponseCurveSet& curves);
ResponseCurveSet read_curves(std::istream& is);
void save_curves(const std::string& path, const ResponseCurveSet& curves);
ResponseCurveSet load_curves(const std::string& path);

// Per-pixel curve family: linear interpolation between two corner curve
// sets across the normalized horizontal pixel coordinate.
class CurveFamily {
 public:
  CurveFamily(ResponseCurveSet left, ResponseCurveSet right);
  ResponseCurveSet at(double x01) const;
  const ResponseCurveSet& left() const { return left_; }
  const ResponseCurveSet& right() const { return right_; }

 private:
  ResponseCurveSet left_, right_;
};

}  // namespace tof
