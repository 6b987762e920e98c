// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <functional>

#include "tof/inference.hpp"
#include "tof/regress.hpp"
#include "tof/sim.hpp"

namespace tof {

struct DesignConstraints {
  int k_shutter = 1000;  // total pulse budget: sum of all Z entries
  int k_sparsity = 4;    // max nonzero entries per column
};

bool design_feasible(const Eigen::MatrixXi& z, const DesignConstraints& constraints);

// Geometric temperature schedule T_k = T_start * beta^k with
// beta = exp((log T_final - log T_start) / iterations).
struct AnnealSchedule {
  double t_start = 20.0;
  double t_final = 0.01;
  int iterations = 20000;

  double factor() const;
  double temperature(int k) const;
};

struct LossSpec {
  enum class Kind { squared, depth_relative };
  enum class Estimator { mle, tree };

  Kind kind = Kind::squared;
  Estimator estimator = Estimator::mle;
  int k_mc = 8192;
  int mle_restarts = 3;
  const RegressionTree* tree = nullptr;  // required for Estimator::tree
};

// Everything needed to turn a candidate Z into a loss value.
struct DesignProblem {
  const Eigen::MatrixXd* q = nullptr;  // T x m basis response matrix
  const BoxcarCatalog* catalog = nullptr;
  DepthGrid grid;
  PriorBox priors;
  NoiseParams noise;
  DesignConstraints constraints;
  int cheb_degree = 16;
  double ambient_gain = 1.0;
  int workers = 1;
};

/// Monte Carlo estimate of the expected depth loss under the plain model.
double estimate_design_loss(const DesignProblem& problem, const Eigen::MatrixXi& z,
                            const LossSpec& loss, Rng& rng, int* failures = nullptr);

/// Mixture objective: beta_mix of the samples come from the plain model,
/// the rest from scene path samples (labeled with the direct-path depth).
double mixture_design_loss(const DesignProblem& problem, const Eigen::MatrixXi& z,
                           const LossSpec& loss, const std::vector<PathSampleSet>& scenes,
                           double beta_mix, Rng& rng, int* failures = nullptr);

enum class AnnealKernel {
  move_mass = 0,
  swap_values = 1,
  set_zero = 2,
  set_nonzero = 3,
  perturb_weight = 4,
  global_scale = 5,
};

struct AnnealOptions {
  // move-mass, swap, set-zero, set-nonzero, perturb, global-scale
  std::array<double, 6> kernel_probs{0.20, 0.20, 0.10, 0.10, 0.30, 0.10};
  double sigma_log = 0.3;         // perturb-weight log-normal scale
  double sigma_log_global = 0.1;  // global-scale log-normal scale
};

struct TraceRow {
  int iteration = 0;
  double temperature = 0.0;
  double current_loss = 0.0;
  double best_loss = 0.0;
};

struct AnnealResult {
  Eigen::MatrixXi best_z;
  double best_loss = 0.0;
  std::vector<TraceRow> trace;
  long proposals = 0;
  long accepted = 0;
  long rejected_infeasible = 0;
};

using DesignLoss = std::function<double(const Eigen::MatrixXi&, Rng&)>;

/// Metropolis-Hastings simulated annealing over the (B, V) augmented state,
/// starting from the all-closed design Z = 0.
AnnealResult anneal_design(int m, int n, const DesignConstraints& constraints,
                           const AnnealSchedule& schedule, const DesignLoss& loss_fn, Rng& rng,
                           const AnnealOptions& opts = {});

/// Convenience overload binding the Monte Carlo model loss.
AnnealResult anneal_design(const DesignProblem& problem, int n_channels,
                           const AnnealSchedule& schedule, const LossSpec& loss, Rng& rng,
                           const AnnealOptions& opts = {});

/// A feasible benchmark design: spreads the budget evenly over the first
/// k_sparsity catalog rows of every column.
Eigen::MatrixXi naive_equal_design(int m, int n, const DesignConstraints& constraints);

}  // namespace tof
