// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "tof/model.hpp"

namespace tof {

// ---------------------------------------------------------------------------
// Generic pieces: quasi-Newton minimizer and mixture importance sampling.
// ---------------------------------------------------------------------------

/// Objective callback: returns f(x) and fills grad (same size as x).
/// Returning +inf marks x as infeasible; grad is ignored there.
using Objective = std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct BfgsOptions {
  int max_iters = 200;
  double grad_tol = 1e-6;
  int max_backtracks = 60;
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  bool converged = false;
  int iters = 0;
};

BfgsResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0,
                         const BfgsOptions& opts = {});

struct GaussComponent {
  Eigen::VectorXd mean;
  Eigen::MatrixXd evecs;      // eigenvectors of the precision matrix
  Eigen::VectorXd evals;      // eigenvalues of the precision matrix (> 0)
  double log_weight = 0.0;    // unnormalized mixture weight
  double log_norm = 0.0;      // log of the Gaussian normalization constant

  static GaussComponent from_precision(const Eigen::VectorXd& mean,
                                       const Eigen::MatrixXd& precision, double log_weight);
};

// Mixture-of-Gaussians proposal built from local posterior optima.
class MixtureProposal {
 public:
  explicit MixtureProposal(std::vector<GaussComponent> comps);
  Eigen::VectorXd draw(Rng& rng) const;
  double log_density(const Eigen::VectorXd& x) const;
  int size() const { return static_cast<int>(comps_.size()); }
  const std::vector<GaussComponent>& components() const { return comps_; }

 private:
  std::vector<GaussComponent> comps_;
  std::vector<double> select_cdf_;
};

/// Effective sample size (sum w)^2 / sum w^2 of nonnegative weights.
double ess(const Eigen::VectorXd& weights);

struct ImportanceResult {
  Eigen::MatrixXd samples;       // one row per draw
  Eigen::VectorXd log_weights;   // unnormalized
  Eigen::VectorXd weights;       // normalized to max 1 (exp of shifted logs)
  double ess = 0.0;
  bool ess_reached = false;
};

/// Draw from the proposal in batches until the ESS threshold or the sample
/// cap is reached. log_target may return -inf.
ImportanceResult importance_sample(const MixtureProposal& proposal,
                                   const std::function<double(const Eigen::VectorXd&)>& log_target,
                                   double ess_threshold, int max_samples, int batch, Rng& rng);

// ---------------------------------------------------------------------------
// Imaging-condition inference.
// ---------------------------------------------------------------------------

enum class Method { mle, map, bayes };

struct Diagnostics {
  int restarts = 0;
  int failed_restarts = 0;
  int distinct_optima = 0;
  bool multimodal = false;
  double objective = 0.0;  // negative log-likelihood/posterior at the optimum
  double ess = 0.0;
  bool ess_reached = true;
  bool sigma_defined = true;
};

struct Estimate {
  ImagingConditions theta;
  double sigma_t = 0.0;
  double gamma = 0.0;
  Method method = Method::mle;
  Diagnostics diag;
};

struct InferenceOptions {
  ModelKind kind = ModelKind::single_path;
  int restarts = 0;  // 0 selects the default: 10 single-path, 15 two-path
  int max_iters = 200;
  double grad_tol = 1e-6;
  double barrier_b = 1e-2;      // MLE log-barrier coefficient
  double map_barrier_b = 1e-4;  // smoothed-uniform stand-in inside MAP
  double ess_threshold = 100.0;
  int max_is_samples = 20000;
  int is_batch = 64;
  int gamma_inner = 64;         // fresh responses per theta sample
  int gamma_max_theta = 512;    // posterior samples used for gamma
  double cluster_tol_t = 0.5;   // cm
  double cluster_tol_other = 1e-3;
};

class Inference {
 public:
  Inference(const ResponseCurveSet& curves, const NoiseParams& noise, const PriorBox& priors,
            const InferenceOptions& opts = {});

  Estimate mle(const Eigen::VectorXd& response, Rng& rng) const;
  Estimate map(const Eigen::VectorXd& response, Rng& rng) const;
  Estimate bayes(const Eigen::VectorXd& response, Rng& rng) const;
  Estimate run(Method method, const Eigen::VectorXd& response, Rng& rng) const;

  /// Linearized estimator covariance (sandwich through the optimum); returns
  /// the depth standard deviation, +inf when the Hessian is singular.
  double mle_uncertainty(const Eigen::VectorXd& response, const ImagingConditions& opt,
                         bool* defined = nullptr) const;

  /// Monte Carlo invalidation score with the outer expectation collapsed to
  /// a point mass at theta.
  double gamma_point(const Eigen::VectorXd& response, const ImagingConditions& theta,
                     Rng& rng) const;

  /// Objective used by the optimizer (negative log-likelihood or posterior
  /// plus barrier terms); exposed for tests.
  double objective(const Eigen::VectorXd& theta, Eigen::VectorXd& grad,
                   const Eigen::VectorXd& response, bool map_mode) const;

  std::vector<BfgsResult> run_restarts(const Eigen::VectorXd& response, bool map_mode,
                                       int restarts, Rng& rng) const;
  static const BfgsResult* select_best(const std::vector<BfgsResult>& results);
  std::vector<Eigen::VectorXd> cluster_optima(const std::vector<BfgsResult>& results) const;

  Eigen::MatrixXd numeric_hessian(const Eigen::VectorXd& theta, const Eigen::VectorXd& response,
                                  bool map_mode) const;

  const InferenceOptions& options() const { return opts_; }
  const ResponseCurveSet& curves() const { return curves_; }
  const NoiseParams& noise() const { return noise_; }
  const PriorBox& priors() const { return priors_; }
  int theta_dim() const { return opts_.kind == ModelKind::two_path ? 5 : 3; }

 private:
  int effective_restarts() const;
  Eigen::VectorXd sample_start(Rng& rng) const;
  double barrier(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, double b) const;
  Estimate point_estimate(Method method, const Eigen::VectorXd& response, Rng& rng) const;

  const ResponseCurveSet& curves_;
  NoiseParams noise_;
  PriorBox priors_;
  InferenceOptions opts_;
};

}  // namespace tof
