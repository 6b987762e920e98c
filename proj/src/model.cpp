// SPDX-License-Identifier: Apache-2.0
#include "tof/model.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace tof {

Eigen::VectorXd to_vector(const ImagingConditions& ic) {
  Eigen::VectorXd v(ic.dim());
  v[0] = ic.t;
  v[1] = ic.rho;
  v[2] = ic.lambda;
  if (ic.two_path()) {
    v[3] = *ic.t2;
    v[4] = *ic.rho2;
  }
  return v;
}

ImagingConditions from_vector(const Eigen::VectorXd& v, ModelKind kind) {
  if (kind == ModelKind::two_path) {
    if (v.size() != 5) throw std::invalid_argument("two-path theta must have 5 entries");
    return ImagingConditions::two(v[0], v[1], v[2], v[3], v[4]);
  }
  if (v.size() != 3) throw std::invalid_argument("single-path theta must have 3 entries");
  return ImagingConditions::single(v[0], v[1], v[2]);
}

NoiseParams::NoiseParams(double a, double k) : alpha(a), read_noise(k) {
  if (alpha < 0.0) throw std::invalid_argument("shot-noise slope alpha must be >= 0");
  if (read_noise <= 0.0) throw std::invalid_argument("read-noise floor K must be > 0");
}

void PriorBox::validate() const {
  if (!(t.hi > t.lo) || !(rho.hi > rho.lo) || !(lambda.hi > lambda.lo))
    throw std::invalid_argument("prior ranges must be nonempty");
  if (!(rho.lo > 0.0)) throw std::invalid_argument("rho prior must be strictly positive");
  if (!(lambda.lo >= 0.0)) throw std::invalid_argument("lambda prior must be nonnegative");
  if (!(delta_t2 > 0.0)) throw std::invalid_argument("delta_t2 must be positive");
  if (!(rho2_beta > 0.0)) throw std::invalid_argument("rho2 Beta parameter must be positive");
}

ImagingConditions PriorBox::sample(Rng& rng, ModelKind kind) const {
  ImagingConditions ic;
  ic.t = rng.uniform(t.lo, t.hi);
  ic.rho = rng.uniform(rho.lo, rho.hi);
  ic.lambda = rng.uniform(lambda.lo, lambda.hi);
  if (kind == ModelKind::two_path) {
    ic.t2 = ic.t + rng.uniform(0.0, delta_t2);
    ic.rho2 = 2.0 * rng.beta_one(rho2_beta);
  }
  return ic;
}

double PriorBox::log_density(const ImagingConditions& ic) const {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  if (!t.contains(ic.t) || !rho.contains(ic.rho) || !lambda.contains(ic.lambda)) return ninf;
  double logp = -std::log(t.span()) - std::log(rho.span()) - std::log(lambda.span());
  if (ic.two_path()) {
    double slack = *ic.t2 - ic.t;
    if (!(slack > 0.0) || slack > delta_t2) return ninf;
    logp -= std::log(delta_t2);
    double r2 = *ic.rho2;
    if (r2 < 0.0 || r2 > 2.0) return ninf;
    // p(rho2) = (beta/2) * (1 - rho2/2)^(beta-1) on [0, 2]
    if (r2 == 2.0 && rho2_beta > 1.0) return ninf;
    logp += std::log(rho2_beta / 2.0) + (rho2_beta - 1.0) * std::log1p(-r2 / 2.0);
  }
  return logp;
}

Eigen::VectorXd PriorBox::log_density_grad(const ImagingConditions& ic) const {
  Eigen::VectorXd g = Eigen::VectorXd::Zero(ic.dim());
  if (ic.two_path()) g[4] = -(rho2_beta - 1.0) / (2.0 - *ic.rho2);
  return g;
}

Range PriorBox::coord_range(int coord) const {
  switch (coord) {
    case 0: return t;
    case 1: return rho;
    case 2: return lambda;
    case 4: return {0.0, 2.0};
    default: throw std::invalid_argument("no box range for this coordinate");
  }
}

Eigen::VectorXd mean_response(const ResponseCurveSet& curves, const ImagingConditions& ic) {
  Eigen::VectorXd c = curves.values(ic.t);
  Eigen::VectorXd inner = c + ic.lambda * curves.ambient();
  if (ic.two_path()) inner += *ic.rho2 * curves.values(*ic.t2);
  return ic.rho * inner;
}

Eigen::VectorXd noise_cov_diag(const Eigen::VectorXd& mu, const NoiseParams& noise) {
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    if (mu[i] < 0.0) throw std::invalid_argument("negative mean response entry");
  return (noise.alpha * mu).array() + noise.read_noise;
}

Eigen::VectorXd sample_response(const ResponseCurveSet& curves, const ImagingConditions& ic,
                                const NoiseParams& noise, Rng& rng) {
  Eigen::VectorXd mu = mean_response(curves, ic);
  Eigen::VectorXd r(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i)
    r[i] = rng.normal(mu[i], std::sqrt(model_variance(mu[i], noise)));
  return r;
}

namespace {

double loglik_from_mu(const Eigen::VectorXd& response, const Eigen::VectorXd& mu,
                      const NoiseParams& noise) {
  double acc = 0.0;
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    double v = model_variance(mu[i], noise);
    double d = response[i] - mu[i];
    acc -= d * d / (2.0 * v) + 0.5 * std::log(v);
  }
  return acc;
}

}  // namespace

LogLikResult log_likelihood(const Eigen::VectorXd& response, const ImagingConditions& ic,
                            const ResponseCurveSet& curves, const NoiseParams& noise) {
  if (response.size() != curves.channel_count())
    throw std::invalid_argument("response length does not match curve channel count");
  const int n = curves.channel_count();
  Eigen::VectorXd c(n), dc(n);
  curves.values_jet(ic.t, c, dc);
  Eigen::VectorXd c2, dc2;
  if (ic.two_path()) curves.values_jet(*ic.t2, c2, dc2);

  const Eigen::VectorXd& amb = curves.ambient();
  const int dim = ic.dim();
  LogLikResult out;
  out.grad = Eigen::VectorXd::Zero(dim);
  for (int i = 0; i < n; ++i) {
    double inner = c[i] + ic.lambda * amb[i];
    if (ic.two_path()) inner += *ic.rho2 * c2[i];
    double mu = ic.rho * inner;
    double v = model_variance(mu, noise);
    double dvdmu = model_variance_slope(mu, noise);
    double d = response[i] - mu;
    out.value -= d * d / (2.0 * v) + 0.5 * std::log(v);
    // dL/dmu, then chain through dmu/dtheta
    double dl_dmu = d / v + dvdmu * d * d / (2.0 * v * v) - dvdmu / (2.0 * v);
    out.grad[0] += dl_dmu * ic.rho * dc[i];
    out.grad[1] += dl_dmu * inner;
    out.grad[2] += dl_dmu * ic.rho * amb[i];
    if (ic.two_path()) {
      out.grad[3] += dl_dmu * ic.rho * (*ic.rho2) * dc2[i];
      out.grad[4] += dl_dmu * ic.rho * c2[i];
    }
  }
  return out;
}

double log_likelihood_value(const Eigen::VectorXd& response, const ImagingConditions& ic,
                            const ResponseCurveSet& curves, const NoiseParams& noise) {
  return loglik_from_mu(response, mean_response(curves, ic), noise);
}

double log_likelihood_given_mean(const Eigen::VectorXd& response, const Eigen::VectorXd& mu,
                                 const NoiseParams& noise) {
  return loglik_from_mu(response, mu, noise);
}

Eigen::MatrixXd mean_jacobian(const ResponseCurveSet& curves, const ImagingConditions& ic) {
  const int n = curves.channel_count();
  Eigen::VectorXd c(n), dc(n);
  curves.values_jet(ic.t, c, dc);
  Eigen::VectorXd c2, dc2;
  if (ic.two_path()) curves.values_jet(*ic.t2, c2, dc2);
  Eigen::MatrixXd jac(n, ic.dim());
  for (int i = 0; i < n; ++i) {
    double inner = c[i] + ic.lambda * curves.ambient()[i];
    if (ic.two_path()) inner += *ic.rho2 * c2[i];
    jac(i, 0) = ic.rho * dc[i];
    jac(i, 1) = inner;
    jac(i, 2) = ic.rho * curves.ambient()[i];
    if (ic.two_path()) {
      jac(i, 3) = ic.rho * (*ic.rho2) * dc2[i];
      jac(i, 4) = ic.rho * c2[i];
    }
  }
  return jac;
}

double log_likelihood_or_ninf(const Eigen::VectorXd& response, const ImagingConditions& ic,
                              const ResponseCurveSet& curves, const NoiseParams& noise) {
  Range vr = curves.valid_range();
  if (!vr.contains(ic.t)) return -std::numeric_limits<double>::infinity();
  if (ic.two_path() && !vr.contains(*ic.t2))
    return -std::numeric_limits<double>::infinity();
  return log_likelihood_value(response, ic, curves, noise);
}

}  // namespace tof
