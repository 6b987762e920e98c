// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <optional>

#include "tof/common.hpp"
#include "tof/curves.hpp"

namespace tof {

enum class ModelKind { single_path, two_path };

// Latent imaging conditions theta = (t, rho, lambda [, t2, rho2]).
// Depth-time t is expressed in cm.
struct ImagingConditions {
  double t = 0.0;
  double rho = 0.0;
  double lambda = 0.0;
  std::optional<double> t2;
  std::optional<double> rho2;

  bool two_path() const { return t2.has_value(); }
  int dim() const { return two_path() ? 5 : 3; }

  static ImagingConditions single(double t, double rho, double lambda) {
    return {t, rho, lambda, std::nullopt, std::nullopt};
  }
  static ImagingConditions two(double t, double rho, double lambda, double t2, double rho2) {
    return {t, rho, lambda, t2, rho2};
  }
};

Eigen::VectorXd to_vector(const ImagingConditions& ic);
ImagingConditions from_vector(const Eigen::VectorXd& v, ModelKind kind);

// Diagonal noise model: Var[R_i] = alpha * mu_i + read_noise.
struct NoiseParams {
  double alpha = 1.0;
  double read_noise = 50.0;  // K

  NoiseParams() = default;
  NoiseParams(double a, double k);
};

// Independent box priors on (t, rho, lambda); t2 - t uniform on (0, delta_t2);
// rho2 / 2 ~ Beta(1, rho2_beta) on [0, 2].
struct PriorBox {
  Range t{50.0, 500.0};
  Range rho{0.02, 1.5};
  Range lambda{0.0, 4.0};
  double delta_t2 = 150.0;
  double rho2_beta = 5.0;

  void validate() const;
  ImagingConditions sample(Rng& rng, ModelKind kind) const;
  /// Joint log density; -inf outside the support.
  double log_density(const ImagingConditions& ic) const;
  /// Gradient of log_density over theta; only the rho2 term is non-flat.
  Eigen::VectorXd log_density_grad(const ImagingConditions& ic) const;
  /// Parameter box for theta (t2 handled as slack over t in optimizers).
  Range coord_range(int coord) const;
};

/// Expected response mu = rho * (C(t) + lambda * A [+ rho2 * C(t2)]).
Eigen::VectorXd mean_response(const ResponseCurveSet& curves, const ImagingConditions& ic);

/// Per-channel variances alpha * mu_i + read_noise.
Eigen::VectorXd noise_cov_diag(const Eigen::VectorXd& mu, const NoiseParams& noise);

// Variance used by the generative model and the likelihood. Chebyshev
// approximants can undershoot zero by the fit error where the true curve
// vanishes; the clamp keeps the model self-consistent there.
inline double model_variance(double mu_i, const NoiseParams& noise) {
  return noise.alpha * (mu_i > 0.0 ? mu_i : 0.0) + noise.read_noise;
}
inline double model_variance_slope(double mu_i, const NoiseParams& noise) {
  return mu_i > 0.0 ? noise.alpha : 0.0;
}

/// One Gaussian draw per channel; values are not clipped at zero.
Eigen::VectorXd sample_response(const ResponseCurveSet& curves, const ImagingConditions& ic,
                                const NoiseParams& noise, Rng& rng);

struct LogLikResult {
  double value = 0.0;
  Eigen::VectorXd grad;  // over theta, dimension ic.dim()
};

/// Jacobian d mu / d theta (n x dim).
Eigen::MatrixXd mean_jacobian(const ResponseCurveSet& curves, const ImagingConditions& ic);

/// Log-likelihood for a precomputed mean (same constant convention as
/// log_likelihood).
double log_likelihood_given_mean(const Eigen::VectorXd& response, const Eigen::VectorXd& mu,
                                 const NoiseParams& noise);

/// Log-likelihood up to the -(n/2) log(2 pi) constant, with analytic
/// gradient via the Chebyshev derivatives.
LogLikResult log_likelihood(const Eigen::VectorXd& response, const ImagingConditions& ic,
                            const ResponseCurveSet& curves, const NoiseParams& noise);

/// Value-only variant (same constant convention).
double log_likelihood_value(const Eigen::VectorXd& response, const ImagingConditions& ic,
                            const ResponseCurveSet& curves, const NoiseParams& noise);

/// Like log_likelihood_value but returns -inf instead of throwing when the
/// depths fall outside the curve range. Used by samplers.
double log_likelihood_or_ninf(const Eigen::VectorXd& response, const ImagingConditions& ic,
                              const ResponseCurveSet& curves, const NoiseParams& noise);

}  // namespace tof
