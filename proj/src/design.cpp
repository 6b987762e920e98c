// SPDX-License-Identifier: Apache-2.0
#include "tof/design.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <stdexcept>

namespace tof {

bool design_feasible(const Eigen::MatrixXi& z, const DesignConstraints& constraints) {
  if ((z.array() < 0).any()) return false;
  if (z.sum() > constraints.k_shutter) return false;
  for (Eigen::Index col = 0; col < z.cols(); ++col) {
    int nonzero = 0;
    for (Eigen::Index row = 0; row < z.rows(); ++row)
      if (z(row, col) > 0) ++nonzero;
    if (nonzero > constraints.k_sparsity) return false;
  }
  return true;
}

double AnnealSchedule::factor() const {
  return std::exp((std::log(t_final) - std::log(t_start)) / static_cast<double>(iterations));
}

double AnnealSchedule::temperature(int k) const {
  return t_start * std::pow(factor(), static_cast<double>(k));
}

namespace {

double depth_loss(const LossSpec& loss, double estimate, double truth) {
  double err = (estimate - truth) * (estimate - truth);
  return loss.kind == LossSpec::Kind::depth_relative ? err / truth : err;
}

// Shared Monte Carlo core: count_model samples from the plain prior+model,
// count_scene samples from scene path responses.
double mc_design_loss(const DesignProblem& problem, const Eigen::MatrixXi& z,
                      const LossSpec& loss, const std::vector<PathSampleSet>& scenes,
                      int count_model, int count_scene, Rng& rng, int* failures) {
  if (!problem.q || !problem.catalog) throw std::invalid_argument("design problem is incomplete");
  if (!design_feasible(z, problem.constraints))
    throw std::invalid_argument("design matrix violates its constraints");
  if (loss.estimator == LossSpec::Estimator::tree && loss.tree == nullptr)
    throw std::invalid_argument("tree estimator requested without a tree");

  ResponseCurveSet curves = compose_curves(*problem.q, z, *problem.catalog, problem.grid,
                                           problem.cheb_degree, problem.ambient_gain);
  InferenceOptions iopts;
  iopts.kind = ModelKind::single_path;
  iopts.restarts = loss.mle_restarts;
  Inference inference(curves, problem.noise, problem.priors, iopts);

  // flattened scene pixel table for uniform pixel draws
  std::vector<std::pair<const PathSampleSet*, std::size_t>> scene_pixels;
  if (count_scene > 0) {
    for (const auto& s : scenes)
      for (std::size_t p = 0; p < s.pixels.size(); ++p) scene_pixels.emplace_back(&s, p);
    if (scene_pixels.empty())
      throw std::invalid_argument("scene samples requested but no scene pixels given");
  }

  const int total = count_model + count_scene;
  std::vector<double> losses(static_cast<std::size_t>(total), 0.0);
  std::vector<char> ok(static_cast<std::size_t>(total), 0);
  std::uint64_t base = rng.next_u64();

  parallel_for(static_cast<std::size_t>(total), problem.workers, [&](std::size_t i) {
    Rng local = Rng(base).fork(i);
    double truth;
    Eigen::VectorXd response;
    if (static_cast<int>(i) < count_model) {
      ImagingConditions ic = problem.priors.sample(local, ModelKind::single_path);
      truth = ic.t;
      response = sample_response(curves, ic, problem.noise, local);
    } else {
      auto pick = scene_pixels[local.index(scene_pixels.size())];
      const PixelPaths& pixel = pick.first->pixels[pick.second];
      truth = pick.first->ground_truth[pick.second];
      Eigen::VectorXd mu = forward_response(pixel, curves);
      response.resize(mu.size());
      for (Eigen::Index c = 0; c < mu.size(); ++c)
        response[c] = mu[c] + std::sqrt(model_variance(mu[c], problem.noise)) * local.normal();
    }
    try {
      double estimate;
      if (loss.estimator == LossSpec::Estimator::tree) {
        estimate = loss.tree->predict(response.transpose());
      } else {
        estimate = inference.mle(response, local).theta.t;
      }
      losses[i] = depth_loss(loss, estimate, truth);
      ok[i] = 1;
    } catch (const std::exception&) {
      ok[i] = 0;
    }
  });

  double acc = 0.0;
  int good = 0;
  for (std::size_t i = 0; i < losses.size(); ++i) {
    if (!ok[i]) continue;
    acc += losses[i];
    ++good;
  }
  if (failures) *failures = total - good;
  if (good == 0) throw std::runtime_error("design loss: every sample failed");
  return acc / static_cast<double>(good);
}

}  // namespace

double estimate_design_loss(const DesignProblem& problem, const Eigen::MatrixXi& z,
                            const LossSpec& loss, Rng& rng, int* failures) {
  return mc_design_loss(problem, z, loss, {}, loss.k_mc, 0, rng, failures);
}

double mixture_design_loss(const DesignProblem& problem, const Eigen::MatrixXi& z,
                           const LossSpec& loss, const std::vector<PathSampleSet>& scenes,
                           double beta_mix, Rng& rng, int* failures) {
  if (beta_mix < 0.0 || beta_mix > 1.0)
    throw std::invalid_argument("beta_mix must lie in [0, 1]");
  int count_model = static_cast<int>(std::lround(beta_mix * loss.k_mc));
  int count_scene = loss.k_mc - count_model;
  if (count_scene > 0 && scenes.empty())
    throw std::invalid_argument("mixture design loss with beta_mix < 1 needs scenes");
  return mc_design_loss(problem, z, loss, scenes, count_model, count_scene, rng, failures);
}

// ---------------------------------------------------------------------------
// Simulated annealing chain over the (B, V) augmented state
// ---------------------------------------------------------------------------

namespace {

struct ChainState {
  Eigen::MatrixXi b;  // 0/1 activation
  Eigen::MatrixXd v;  // positive retained values

  Eigen::MatrixXi z() const {
    Eigen::MatrixXi out(b.rows(), b.cols());
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index i = 0; i < b.cols(); ++i)
        out(j, i) = b(j, i) ? static_cast<int>(std::llround(v(j, i))) : 0;
    return out;
  }

  int active_count() const { return b.sum(); }

  std::pair<Eigen::Index, Eigen::Index> nth_entry(int n, bool active) const {
    int seen = 0;
    for (Eigen::Index j = 0; j < b.rows(); ++j)
      for (Eigen::Index i = 0; i < b.cols(); ++i)
        if ((b(j, i) != 0) == active && seen++ == n) return {j, i};
    throw std::logic_error("entry index out of range");
  }
};

struct Proposal {
  bool valid = false;
  double log_hastings = 0.0;
};

}  // namespace

AnnealResult anneal_design(int m, int n, const DesignConstraints& constraints,
                           const AnnealSchedule& schedule, const DesignLoss& loss_fn, Rng& rng,
                           const AnnealOptions& opts) {
  if (m < 1 || n < 1) throw std::invalid_argument("design needs at least one entry");
  if (!(schedule.t_start > schedule.t_final) || !(schedule.t_final > 0.0))
    throw std::invalid_argument("schedule must satisfy T_start > T_final > 0");

  double prob_total = 0.0;
  for (double p : opts.kernel_probs) {
    if (p < 0.0) throw std::invalid_argument("kernel probabilities must be nonnegative");
    prob_total += p;
  }
  if (!(prob_total > 0.0)) throw std::invalid_argument("kernel probabilities sum to zero");

  ChainState cur;
  cur.b = Eigen::MatrixXi::Zero(m, n);
  cur.v = Eigen::MatrixXd::Ones(m, n);  // retained values; reactivation reuses them

  AnnealResult result;
  Eigen::MatrixXi z_cur = cur.z();
  double f_cur = loss_fn(z_cur, rng);
  result.best_z = z_cur;
  result.best_loss = f_cur;
  result.trace.reserve(static_cast<std::size_t>(schedule.iterations));

  const int total_entries = m * n;
  const auto& probs = opts.kernel_probs;

  for (int k = 0; k < schedule.iterations; ++k) {
    double temperature = schedule.temperature(k);
    ++result.proposals;

    // pick a kernel
    double u = rng.uniform() * prob_total;
    int kernel = 0;
    for (; kernel < 5; ++kernel) {
      if (u < probs[static_cast<std::size_t>(kernel)]) break;
      u -= probs[static_cast<std::size_t>(kernel)];
    }

    ChainState prop = cur;
    Proposal p;
    int active = cur.active_count();

    switch (static_cast<AnnealKernel>(kernel)) {
      case AnnealKernel::move_mass: {
        if (active < 2) break;
        int a = static_cast<int>(rng.index(static_cast<std::size_t>(active)));
        int b = static_cast<int>(rng.index(static_cast<std::size_t>(active - 1)));
        if (b >= a) ++b;
        auto src = cur.nth_entry(a, true);
        auto dst = cur.nth_entry(b, true);
        double v_src = cur.v(src.first, src.second);
        double amount = rng.uniform() * v_src;
        prop.v(src.first, src.second) = v_src - amount;
        prop.v(dst.first, dst.second) += amount;
        if (!(prop.v(src.first, src.second) > 0.0)) break;
        // forward density 1/v_src, reverse 1/v_dst'
        p.log_hastings = std::log(v_src) - std::log(prop.v(dst.first, dst.second));
        p.valid = true;
        break;
      }
      case AnnealKernel::swap_values: {
        if (total_entries < 2) break;
        int a = static_cast<int>(rng.index(static_cast<std::size_t>(total_entries)));
        int b = static_cast<int>(rng.index(static_cast<std::size_t>(total_entries - 1)));
        if (b >= a) ++b;
        Eigen::Index ja = a / n, ia = a % n, jb = b / n, ib = b % n;
        std::swap(prop.b(ja, ia), prop.b(jb, ib));
        std::swap(prop.v(ja, ia), prop.v(jb, ib));
        p.valid = true;  // symmetric
        break;
      }
      case AnnealKernel::set_zero: {
        if (active == 0) break;
        auto e = cur.nth_entry(static_cast<int>(rng.index(static_cast<std::size_t>(active))), true);
        prop.b(e.first, e.second) = 0;
        // reverse move: set-to-nonzero picks among (inactive + 1) entries
        int inactive_after = total_entries - active + 1;
        p.log_hastings = std::log(probs[3] / probs[2]) +
                         std::log(static_cast<double>(active) / inactive_after);
        p.valid = true;
        break;
      }
      case AnnealKernel::set_nonzero: {
        int inactive = total_entries - active;
        if (inactive == 0) break;
        auto e =
            cur.nth_entry(static_cast<int>(rng.index(static_cast<std::size_t>(inactive))), false);
        prop.b(e.first, e.second) = 1;  // retained value in V comes back as-is
        p.log_hastings = std::log(probs[2] / probs[3]) +
                         std::log(static_cast<double>(inactive) / (active + 1));
        p.valid = true;
        break;
      }
      case AnnealKernel::perturb_weight: {
        if (active == 0) break;
        auto e = cur.nth_entry(static_cast<int>(rng.index(static_cast<std::size_t>(active))), true);
        double scale = std::exp(opts.sigma_log * rng.normal());
        prop.v(e.first, e.second) *= scale;
        p.log_hastings = std::log(scale);  // Jacobian of the multiplicative move
        p.valid = true;
        break;
      }
      case AnnealKernel::global_scale: {
        double scale = std::exp(opts.sigma_log_global * rng.normal());
        prop.v *= scale;
        p.log_hastings = total_entries * std::log(scale);
        p.valid = true;
        break;
      }
    }

    if (!p.valid) {
      ++result.rejected_infeasible;
      result.trace.push_back({k, temperature, f_cur, result.best_loss});
      continue;
    }

    Eigen::MatrixXi z_prop = prop.z();
    if (!design_feasible(z_prop, constraints)) {
      ++result.rejected_infeasible;
      result.trace.push_back({k, temperature, f_cur, result.best_loss});
      continue;
    }

    double f_prop = loss_fn(z_prop, rng);
    if (f_prop < result.best_loss) {
      result.best_loss = f_prop;
      result.best_z = z_prop;
    }
    double log_accept = -(f_prop - f_cur) / temperature + p.log_hastings;
    if (log_accept >= 0.0 || std::log(rng.uniform_pos()) < log_accept) {
      cur = std::move(prop);
      f_cur = f_prop;
      ++result.accepted;
    }
    result.trace.push_back({k, temperature, f_cur, result.best_loss});
  }
  return result;
}

AnnealResult anneal_design(const DesignProblem& problem, int n_channels,
                           const AnnealSchedule& schedule, const LossSpec& loss, Rng& rng,
                           const AnnealOptions& opts) {
  if (!problem.q) throw std::invalid_argument("design problem is incomplete");
  auto m = static_cast<int>(problem.q->cols());
  DesignLoss fn = [&](const Eigen::MatrixXi& z, Rng& r) {
    return estimate_design_loss(problem, z, loss, r);
  };
  return anneal_design(m, n_channels, problem.constraints, schedule, fn, rng, opts);
}

Eigen::MatrixXi naive_equal_design(int m, int n, const DesignConstraints& constraints) {
  Eigen::MatrixXi z = Eigen::MatrixXi::Zero(m, n);
  int per_col = std::min(constraints.k_sparsity, m);
  int cells = per_col * n;
  int value = std::max(1, constraints.k_shutter / std::max(1, cells));
  // spread rows so the columns do not all use the same catalog entries
  for (int col = 0; col < n; ++col) {
    for (int s = 0; s < per_col; ++s) {
      int row = (col + s * std::max(1, m / per_col)) % m;
      if (z(row, col) > 0) row = (row + 1) % m;
      z(row, col) = value;
    }
  }
  while (z.sum() > constraints.k_shutter) {
    for (int col = 0; col < n && z.sum() > constraints.k_shutter; ++col)
      for (int row = 0; row < m && z.sum() > constraints.k_shutter; ++row)
        if (z(row, col) > 0) z(row, col) -= 1;
  }
  return z;
}

}  // namespace tof
