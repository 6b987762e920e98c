// SPDX-License-Identifier: Apache-2.0
#include "tof/inference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace tof {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093453;
}  // namespace

BfgsResult bfgs_minimize(const Objective& objective, const Eigen::VectorXd& x0,
                         const BfgsOptions& opts) {
  const auto dim = x0.size();
  BfgsResult res;
  res.x = x0;
  res.grad.resize(dim);
  res.f = objective(res.x, res.grad);
  if (!std::isfinite(res.f)) return res;  // infeasible start

  // initial curvature guess from the gradient scale keeps the first step
  // sane when the objective is sharply scaled (for example near-zero noise)
  Eigen::MatrixXd hinv = Eigen::MatrixXd::Identity(dim, dim) /
                         std::max(1.0, res.grad.lpNorm<Eigen::Infinity>());
  bool scaled = false;
  Eigen::VectorXd g_new(dim);

  for (res.iters = 0; res.iters < opts.max_iters; ++res.iters) {
    if (res.grad.lpNorm<Eigen::Infinity>() < opts.grad_tol) {
      res.converged = true;
      return res;
    }
    Eigen::VectorXd dir = -(hinv * res.grad);
    double slope = dir.dot(res.grad);
    if (!(slope < 0.0)) {  // not a descent direction: reset curvature
      hinv = Eigen::MatrixXd::Identity(dim, dim) /
             std::max(1.0, res.grad.lpNorm<Eigen::Infinity>());
      scaled = false;
      dir = -(hinv * res.grad);
      slope = dir.dot(res.grad);
      if (!(slope < 0.0)) return res;
    }

    double step = 1.0;
    double f_new = kInf;
    bool ok = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      Eigen::VectorXd x_new = res.x + step * dir;
      f_new = objective(x_new, g_new);
      if (std::isfinite(f_new) && f_new <= res.f + 1e-4 * step * slope) {
        Eigen::VectorXd s = step * dir;
        Eigen::VectorXd y = g_new - res.grad;
        double sy = s.dot(y);
        if (sy > 1e-12 * s.norm() * y.norm()) {
          if (!scaled) {
            hinv *= sy / y.squaredNorm();
            scaled = true;
          }
          Eigen::MatrixXd term = Eigen::MatrixXd::Identity(dim, dim) - (s * y.transpose()) / sy;
          hinv = term * hinv * term.transpose() + (s * s.transpose()) / sy;
        }
        res.x = std::move(x_new);
        res.f = f_new;
        res.grad = g_new;
        ok = true;
        break;
      }
      step *= 0.5;
    }
    if (!ok) return res;  // line search stalled
  }
  return res;
}

GaussComponent GaussComponent::from_precision(const Eigen::VectorXd& mean,
                                              const Eigen::MatrixXd& precision,
                                              double log_weight) {
  GaussComponent c;
  c.mean = mean;
  c.log_weight = log_weight;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(precision);
  Eigen::VectorXd evals = es.eigenvalues();
  c.evecs = es.eigenvectors();
  double min_eig = evals.minCoeff();
  if (min_eig <= 0.0) {
    // ridge guard: finite precision can make a local optimum's Hessian
    // indefinite
    double dim = static_cast<double>(precision.rows());
    double ridge = 1e-6 * std::abs(precision.trace()) / dim;
    if (ridge <= 0.0) ridge = 1e-12;
    while (min_eig + ridge <= 0.0) ridge *= 10.0;
    evals.array() += ridge;
  }
  c.evals = evals;
  double logdet = evals.array().log().sum();
  c.log_norm = 0.5 * logdet - 0.5 * static_cast<double>(precision.rows()) * kLogTwoPi;
  return c;
}

MixtureProposal::MixtureProposal(std::vector<GaussComponent> comps) : comps_(std::move(comps)) {
  if (comps_.empty()) throw std::invalid_argument("empty proposal mixture");
  double max_lw = -kInf;
  for (const auto& c : comps_) max_lw = std::max(max_lw, c.log_weight);
  double total = 0.0;
  select_cdf_.reserve(comps_.size());
  for (const auto& c : comps_) {
    total += std::exp(c.log_weight - max_lw);
    select_cdf_.push_back(total);
  }
  for (auto& v : select_cdf_) v /= total;
}

Eigen::VectorXd MixtureProposal::draw(Rng& rng) const {
  double u = rng.uniform();
  std::size_t pick = comps_.size() - 1;
  for (std::size_t i = 0; i < select_cdf_.size(); ++i) {
    if (u <= select_cdf_[i]) {
      pick = i;
      break;
    }
  }
  const auto& c = comps_[pick];
  Eigen::VectorXd z(c.mean.size());
  for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
  return c.mean + c.evecs * (z.array() / c.evals.array().sqrt()).matrix();
}

double MixtureProposal::log_density(const Eigen::VectorXd& x) const {
  double max_term = -kInf;
  std::vector<double> terms(comps_.size());
  double prev = 0.0;
  for (std::size_t i = 0; i < comps_.size(); ++i) {
    const auto& c = comps_[i];
    Eigen::VectorXd y = c.evecs.transpose() * (x - c.mean);
    double qform = (c.evals.array() * y.array().square()).sum();
    double log_pi = std::log(select_cdf_[i] - prev);
    prev = select_cdf_[i];
    terms[i] = log_pi + c.log_norm - 0.5 * qform;
    max_term = std::max(max_term, terms[i]);
  }
  double acc = 0.0;
  for (double t : terms) acc += std::exp(t - max_term);
  return max_term + std::log(acc);
}

double ess(const Eigen::VectorXd& weights) {
  if (weights.size() == 0) throw std::invalid_argument("ess of empty weight vector");
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index i = 0; i < weights.size(); ++i) {
    double w = weights[i];
    if (w < 0.0 || !std::isfinite(w)) throw std::invalid_argument("weights must be finite and >= 0");
    sum += w;
    sum2 += w * w;
  }
  if (sum2 == 0.0) throw std::invalid_argument("ess of all-zero weights");
  return sum * sum / sum2;
}

ImportanceResult importance_sample(const MixtureProposal& proposal,
                                   const std::function<double(const Eigen::VectorXd&)>& log_target,
                                   double ess_threshold, int max_samples, int batch, Rng& rng) {
  std::vector<Eigen::VectorXd> samples;
  std::vector<double> logw;
  ImportanceResult out;
  while (static_cast<int>(samples.size()) < max_samples) {
    int want = std::min(batch, max_samples - static_cast<int>(samples.size()));
    for (int i = 0; i < want; ++i) {
      Eigen::VectorXd x = proposal.draw(rng);
      double lt = log_target(x);
      double lw = std::isfinite(lt) ? lt - proposal.log_density(x) : -kInf;
      samples.push_back(std::move(x));
      logw.push_back(lw);
    }
    double max_lw = -kInf;
    for (double v : logw) max_lw = std::max(max_lw, v);
    if (max_lw == -kInf) continue;  // nothing in support yet
    double sum = 0.0, sum2 = 0.0;
    for (double v : logw) {
      double w = std::exp(v - max_lw);
      sum += w;
      sum2 += w * w;
    }
    out.ess = sum * sum / sum2;
    if (out.ess >= ess_threshold) {
      out.ess_reached = true;
      break;
    }
  }
  const auto m = static_cast<Eigen::Index>(samples.size());
  out.samples.resize(m, samples.empty() ? 0 : samples.front().size());
  out.log_weights.resize(m);
  out.weights.resize(m);
  double max_lw = -kInf;
  for (double v : logw) max_lw = std::max(max_lw, v);
  for (Eigen::Index i = 0; i < m; ++i) {
    out.samples.row(i) = samples[static_cast<std::size_t>(i)];
    out.log_weights[i] = logw[static_cast<std::size_t>(i)];
    out.weights[i] = max_lw == -kInf ? 0.0 : std::exp(out.log_weights[i] - max_lw);
  }
  return out;
}

// ---------------------------------------------------------------------------

Inference::Inference(const ResponseCurveSet& curves, const NoiseParams& noise,
                     const PriorBox& priors, const InferenceOptions& opts)
    : curves_(curves), noise_(noise), priors_(priors), opts_(opts) {
  priors_.validate();
  Range vr = curves_.valid_range();
  if (priors_.t.lo < vr.lo || priors_.t.hi > vr.hi)
    throw std::invalid_argument("depth prior exceeds curve valid range");
  if (opts_.kind == ModelKind::two_path && priors_.t.hi + priors_.delta_t2 > vr.hi)
    throw std::invalid_argument(
        "two-path inference needs curves valid up to t_max + delta_t2");
}

int Inference::effective_restarts() const {
  if (opts_.restarts > 0) return opts_.restarts;
  return opts_.kind == ModelKind::two_path ? 15 : 10;
}

Eigen::VectorXd Inference::sample_start(Rng& rng) const {
  Eigen::VectorXd x(theta_dim());
  auto draw = [&rng](const Range& r) {
    double margin = 1e-3 * r.span();
    return rng.uniform(r.lo + margin, r.hi - margin);
  };
  x[0] = draw(priors_.t);
  x[1] = draw(priors_.rho);
  x[2] = draw(priors_.lambda);
  if (theta_dim() == 5) {
    x[3] = x[0] + draw({0.0, priors_.delta_t2});
    x[4] = draw({0.0, 2.0});
  }
  return x;
}

double Inference::barrier(const Eigen::VectorXd& theta, Eigen::VectorXd* grad, double b) const {
  double phi = 0.0;
  auto box = [&](double x, const Range& r, int coord) {
    double lo = x - r.lo, hi = r.hi - x;
    if (lo <= 0.0 || hi <= 0.0) return false;
    phi -= b * (std::log(lo) + std::log(hi));
    if (grad) (*grad)[coord] += -b * (1.0 / lo - 1.0 / hi);
    return true;
  };
  if (!box(theta[0], priors_.t, 0)) return kInf;
  if (!box(theta[1], priors_.rho, 1)) return kInf;
  if (!box(theta[2], priors_.lambda, 2)) return kInf;
  if (theta.size() == 5) {
    double slack = theta[3] - theta[0];
    double lo = slack, hi = priors_.delta_t2 - slack;
    if (lo <= 0.0 || hi <= 0.0) return kInf;
    phi -= b * (std::log(lo) + std::log(hi));
    if (grad) {
      double d = -b * (1.0 / lo - 1.0 / hi);
      (*grad)[3] += d;
      (*grad)[0] -= d;
    }
    if (!box(theta[4], {0.0, 2.0}, 4)) return kInf;
  }
  return phi;
}

double Inference::objective(const Eigen::VectorXd& theta, Eigen::VectorXd& grad,
                            const Eigen::VectorXd& response, bool map_mode) const {
  grad.setZero(theta.size());
  double b = map_mode ? opts_.map_barrier_b : opts_.barrier_b;
  double phi = barrier(theta, &grad, b);
  if (!std::isfinite(phi)) return kInf;

  ImagingConditions ic = from_vector(theta, opts_.kind);
  LogLikResult ll = log_likelihood(response, ic, curves_, noise_);
  double f = -ll.value + phi;
  grad -= ll.grad;
  if (map_mode) {
    // box terms of the prior are flat; only the rho2 Beta factor bends
    if (ic.two_path()) {
      double r2 = *ic.rho2;
      f -= (priors_.rho2_beta - 1.0) * std::log1p(-r2 / 2.0);
      grad[4] += (priors_.rho2_beta - 1.0) / (2.0 - r2);
    }
  }
  return f;
}

std::vector<BfgsResult> Inference::run_restarts(const Eigen::VectorXd& response, bool map_mode,
                                                int restarts, Rng& rng) const {
  std::vector<BfgsResult> results;
  results.reserve(static_cast<std::size_t>(restarts));
  BfgsOptions bopts;
  bopts.max_iters = opts_.max_iters;
  bopts.grad_tol = opts_.grad_tol;
  Objective obj = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    return objective(x, g, response, map_mode);
  };
  for (int r = 0; r < restarts; ++r) {
    BfgsResult res = bfgs_minimize(obj, sample_start(rng), bopts);
    if (std::isfinite(res.f) && res.x.allFinite()) results.push_back(std::move(res));
  }
  return results;
}

const BfgsResult* Inference::select_best(const std::vector<BfgsResult>& results) {
  const BfgsResult* best = nullptr;
  for (const auto& r : results) {
    if (!best) {
      best = &r;
      continue;
    }
    if (r.f < best->f) {
      best = &r;
    } else if (r.f == best->f) {
      // lexicographic theta tie-break keeps selection order-independent
      for (Eigen::Index i = 0; i < r.x.size(); ++i) {
        if (r.x[i] < best->x[i]) {
          best = &r;
          break;
        }
        if (r.x[i] > best->x[i]) break;
      }
    }
  }
  return best;
}

std::vector<Eigen::VectorXd> Inference::cluster_optima(
    const std::vector<BfgsResult>& results) const {
  std::vector<const BfgsResult*> order;
  order.reserve(results.size());
  for (const auto& r : results) order.push_back(&r);
  std::sort(order.begin(), order.end(), [](const BfgsResult* a, const BfgsResult* b) {
    if (a->f != b->f) return a->f < b->f;
    for (Eigen::Index i = 0; i < a->x.size(); ++i) {
      if (a->x[i] != b->x[i]) return a->x[i] < b->x[i];
    }
    return false;
  });
  std::vector<Eigen::VectorXd> reps;
  for (const auto* r : order) {
    bool merged = false;
    for (const auto& rep : reps) {
      bool close = true;
      for (Eigen::Index i = 0; i < rep.size(); ++i) {
        double tol = (i == 0 || i == 3) ? opts_.cluster_tol_t : opts_.cluster_tol_other;
        if (std::abs(rep[i] - r->x[i]) >= tol) {
          close = false;
          break;
        }
      }
      if (close) {
        merged = true;
        break;
      }
    }
    if (!merged) reps.push_back(r->x);
  }
  return reps;
}

Eigen::MatrixXd Inference::numeric_hessian(const Eigen::VectorXd& theta,
                                           const Eigen::VectorXd& response, bool map_mode) const {
  const auto dim = theta.size();
  Eigen::MatrixXd h(dim, dim);
  Eigen::VectorXd gp(dim), gm(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    double scale;
    switch (j) {
      case 0: scale = priors_.t.span(); break;
      case 1: scale = priors_.rho.span(); break;
      case 2: scale = priors_.lambda.span(); break;
      case 3: scale = priors_.delta_t2; break;
      default: scale = 2.0; break;
    }
    double step = 1e-4 * scale;
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += step;
    tm[j] -= step;
    double fp = objective(tp, gp, response, map_mode);
    double fm = objective(tm, gm, response, map_mode);
    if (!std::isfinite(fp) || !std::isfinite(fm)) {
      // fall back to a one-sided step towards the interior
      step *= 0.5;
      tp = theta;
      tm = theta;
      tp[j] += step;
      tm[j] -= step;
      fp = objective(tp, gp, response, map_mode);
      fm = objective(tm, gm, response, map_mode);
    }
    h.col(j) = (gp - gm) / (2.0 * step);
  }
  return 0.5 * (h + h.transpose());
}

double Inference::mle_uncertainty(const Eigen::VectorXd& response, const ImagingConditions& opt,
                                  bool* defined) const {
  const int dim = opt.dim();
  Eigen::VectorXd theta = to_vector(opt);

  // Hessian of the negative log-likelihood (no barrier) from the analytic
  // gradient.
  Eigen::MatrixXd h(dim, dim);
  for (int j = 0; j < dim; ++j) {
    double scale;
    switch (j) {
      case 0: scale = priors_.t.span(); break;
      case 1: scale = priors_.rho.span(); break;
      case 2: scale = priors_.lambda.span(); break;
      case 3: scale = priors_.delta_t2; break;
      default: scale = 2.0; break;
    }
    double step = 1e-4 * scale;
    Eigen::VectorXd tp = theta, tm = theta;
    tp[j] += step;
    tm[j] -= step;
    LogLikResult lp = log_likelihood(response, from_vector(tp, opts_.kind), curves_, noise_);
    LogLikResult lm = log_likelihood(response, from_vector(tm, opts_.kind), curves_, noise_);
    h.col(j) = -(lp.grad - lm.grad) / (2.0 * step);
  }
  h = 0.5 * (h + h.transpose());

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(h);
  double max_eig = es.eigenvalues().cwiseAbs().maxCoeff();
  if (es.eigenvalues().minCoeff() <= 1e-12 * max_eig) {
    if (defined) *defined = false;
    return kInf;
  }

  Eigen::VectorXd mu = mean_response(curves_, opt);
  Eigen::VectorXd var(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) var[i] = model_variance(mu[i], noise_);
  Eigen::MatrixXd jac = mean_jacobian(curves_, opt);
  // d^2 NLL / dR_i dtheta_j = -(1/v_i + v'(mu_i) (R_i - mu_i)/v_i^2) * J_ij
  Eigen::MatrixXd gr(dim, mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) {
    double v = var[i];
    double factor = -(1.0 / v + model_variance_slope(mu[i], noise_) * (response[i] - mu[i]) / (v * v));
    gr.col(i) = factor * jac.row(i).transpose();
  }
  Eigen::MatrixXd hinv = es.eigenvectors() * es.eigenvalues().cwiseInverse().asDiagonal() *
                         es.eigenvectors().transpose();
  Eigen::MatrixXd sensitivity = -hinv * gr;
  Eigen::MatrixXd cov = sensitivity * var.asDiagonal() * sensitivity.transpose();
  if (defined) *defined = true;
  double v_t = cov(0, 0);
  return v_t > 0.0 ? std::sqrt(v_t) : 0.0;
}

double Inference::gamma_point(const Eigen::VectorXd& response, const ImagingConditions& theta,
                              Rng& rng) const {
  Eigen::VectorXd mu = mean_response(curves_, theta);
  Eigen::VectorXd sd(mu.size());
  for (Eigen::Index i = 0; i < mu.size(); ++i) sd[i] = std::sqrt(model_variance(mu[i], noise_));
  double obs = log_likelihood_given_mean(response, mu, noise_);
  int count = 0;
  Eigen::VectorXd fresh(mu.size());
  for (int s = 0; s < opts_.gamma_inner; ++s) {
    for (Eigen::Index i = 0; i < mu.size(); ++i) fresh[i] = mu[i] + sd[i] * rng.normal();
    if (log_likelihood_given_mean(fresh, mu, noise_) <= obs) ++count;
  }
  return static_cast<double>(count) / static_cast<double>(opts_.gamma_inner);
}

Estimate Inference::point_estimate(Method method, const Eigen::VectorXd& response,
                                   Rng& rng) const {
  bool map_mode = method == Method::map;
  int restarts = effective_restarts();
  auto results = run_restarts(response, map_mode, restarts, rng);
  if (results.empty())
    throw std::runtime_error("inference failed: no restart reached a finite optimum");
  const BfgsResult* best = select_best(results);
  auto reps = cluster_optima(results);

  Estimate est;
  est.method = method;
  est.theta = from_vector(best->x, opts_.kind);
  est.diag.restarts = restarts;
  est.diag.failed_restarts = restarts - static_cast<int>(results.size());
  est.diag.distinct_optima = static_cast<int>(reps.size());
  est.diag.multimodal = reps.size() > 1;
  est.diag.objective = best->f;
  est.sigma_t = mle_uncertainty(response, est.theta, &est.diag.sigma_defined);
  est.gamma = gamma_point(response, est.theta, rng);
  return est;
}

Estimate Inference::mle(const Eigen::VectorXd& response, Rng& rng) const {
  return point_estimate(Method::mle, response, rng);
}

Estimate Inference::map(const Eigen::VectorXd& response, Rng& rng) const {
  return point_estimate(Method::map, response, rng);
}

Estimate Inference::bayes(const Eigen::VectorXd& response, Rng& rng) const {
  int restarts = effective_restarts();
  auto results = run_restarts(response, true, restarts, rng);
  if (results.empty())
    throw std::runtime_error("inference failed: no restart reached a finite optimum");
  auto reps = cluster_optima(results);

  std::vector<GaussComponent> comps;
  comps.reserve(reps.size());
  for (const auto& rep : reps) {
    Eigen::MatrixXd h = numeric_hessian(rep, response, true);
    ImagingConditions ic = from_vector(rep, opts_.kind);
    double lw = priors_.log_density(ic) + log_likelihood_or_ninf(response, ic, curves_, noise_);
    if (!std::isfinite(lw)) continue;
    comps.push_back(GaussComponent::from_precision(rep, h, lw));
  }
  if (comps.empty())
    throw std::runtime_error("inference failed: no usable proposal component");
  MixtureProposal proposal(std::move(comps));

  auto log_target = [&](const Eigen::VectorXd& x) {
    ImagingConditions ic = from_vector(x, opts_.kind);
    double lp = priors_.log_density(ic);
    if (!std::isfinite(lp)) return -kInf;
    return lp + log_likelihood_or_ninf(response, ic, curves_, noise_);
  };
  ImportanceResult is = importance_sample(proposal, log_target, opts_.ess_threshold,
                                          opts_.max_is_samples, opts_.is_batch, rng);

  Estimate est;
  est.method = Method::bayes;
  est.diag.restarts = restarts;
  est.diag.failed_restarts = restarts - static_cast<int>(results.size());
  est.diag.distinct_optima = proposal.size();
  est.diag.multimodal = proposal.size() > 1;
  est.diag.ess = is.ess;
  est.diag.ess_reached = is.ess_reached;

  double wsum = is.weights.sum();
  if (!(wsum > 0.0)) {  // degenerate: fall back to the best MAP optimum
    const BfgsResult* best = select_best(results);
    est.theta = from_vector(best->x, opts_.kind);
    est.diag.ess_reached = false;
    est.sigma_t = mle_uncertainty(response, est.theta, &est.diag.sigma_defined);
    est.gamma = gamma_point(response, est.theta, rng);
    est.diag.objective = best->f;
    return est;
  }

  Eigen::VectorXd mean = (is.samples.transpose() * is.weights) / wsum;
  est.theta = from_vector(mean, opts_.kind);
  double t_second = 0.0;
  for (Eigen::Index i = 0; i < is.samples.rows(); ++i) {
    double d = is.samples(i, 0) - mean[0];
    t_second += is.weights[i] * d * d;
  }
  est.sigma_t = std::sqrt(t_second / wsum);
  est.diag.objective = -log_target(mean);

  // gamma: posterior-weighted Monte Carlo of the inner tail probability
  double gamma_acc = 0.0, gamma_w = 0.0;
  const auto use = std::min<Eigen::Index>(is.samples.rows(), opts_.gamma_max_theta);
  for (Eigen::Index i = 0; i < use; ++i) {
    double w = is.weights[i];
    if (w <= 0.0) continue;
    Eigen::VectorXd row = is.samples.row(i).transpose();
    gamma_acc += w * gamma_point(response, from_vector(row, opts_.kind), rng);
    gamma_w += w;
  }
  est.gamma = gamma_w > 0.0 ? gamma_acc / gamma_w : 0.0;
  return est;
}

Estimate Inference::run(Method method, const Eigen::VectorXd& response, Rng& rng) const {
  switch (method) {
    case Method::mle: return mle(response, rng);
    case Method::map: return map(response, rng);
    default: return bayes(response, rng);
  }
}

}  // namespace tof
