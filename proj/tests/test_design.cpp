// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <map>

#include "tof/checks.hpp"
#include "tof/design.hpp"

using namespace tof;

TEST_CASE("geometric schedule hits its endpoints and midpoint") {
  AnnealSchedule schedule{20.0, 0.01, 20000};
  CHECK(schedule.temperature(0) == doctest::Approx(20.0));
  CHECK(schedule.temperature(schedule.iterations) == doctest::Approx(0.01).epsilon(1e-9));
  CHECK(schedule.temperature(schedule.iterations / 2) ==
        doctest::Approx(std::sqrt(20.0 * 0.01)).epsilon(1e-9));  // 0.447...
  for (int k = 1; k <= schedule.iterations; k += 997)
    CHECK(schedule.temperature(k) < schedule.temperature(k - 1));
}

TEST_CASE("feasibility covers both constraints") {
  DesignConstraints c{10, 2};
  Eigen::MatrixXi z = Eigen::MatrixXi::Zero(4, 2);
  CHECK(design_feasible(z, c));
  z(0, 0) = 5;
  z(1, 0) = 5;
  CHECK(design_feasible(z, c));
  z(2, 0) = 1;  // third nonzero in column 0
  CHECK(!design_feasible(z, c));
  z(2, 0) = 0;
  z(0, 1) = 1;  // budget 11 > 10
  CHECK(!design_feasible(z, c));
  z(0, 1) = 0;
  z(1, 1) = -1;
  CHECK(!design_feasible(z, c));
}

TEST_CASE("naive equal design is feasible") {
  DesignConstraints c{1000, 4};
  Eigen::MatrixXi z = naive_equal_design(23, 4, c);
  CHECK(design_feasible(z, c));
  CHECK(z.sum() > 0);
}

namespace {

DesignProblem rig_problem(const TestRig& rig, int workers = 1) {
  DesignProblem p;
  p.q = &rig.q;
  p.catalog = &rig.catalog;
  p.grid = rig.grid;
  p.priors = rig.priors;
  p.noise = rig.noise;
  p.workers = workers;
  return p;
}

RegressionTree constant_tree(double value, int n_features) {
  RegressionTree::Node leaf;
  leaf.kind = LeafKind::constant;
  leaf.coef = Eigen::VectorXd::Constant(1, value);
  return RegressionTree({leaf}, 0, n_features, false, LeafKind::constant);
}

}  // namespace

TEST_CASE("design loss is seed-deterministic") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig, 2);
  LossSpec loss;
  loss.k_mc = 64;
  loss.mle_restarts = 2;
  Rng a(5), b(5), c(6);
  double la = estimate_design_loss(problem, rig.z, loss, a);
  double lb = estimate_design_loss(problem, rig.z, loss, b);
  double lc = estimate_design_loss(problem, rig.z, loss, c);
  CHECK(la == lb);  // bit-exact
  CHECK(la != lc);
}

TEST_CASE("zero-noise loss of a good design is tiny") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig, 2);
  problem.noise = NoiseParams(0.0, 1e-6);
  LossSpec loss;
  loss.k_mc = 48;
  loss.mle_restarts = 3;
  Rng rng(7);
  int failures = 0;
  double l = estimate_design_loss(problem, rig.z, loss, &rng != nullptr ? rng : rng, &failures);
  CHECK(l < 0.25);  // cm^2
  CHECK(failures == 0);
}

TEST_CASE("a closed design degrades to the prior variance of depth") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig, 2);
  LossSpec loss;
  loss.k_mc = 2048;
  loss.mle_restarts = 2;
  Eigen::MatrixXi z = Eigen::MatrixXi::Zero(static_cast<int>(rig.catalog.size()), 4);
  Rng rng(11);
  double l = estimate_design_loss(problem, z, loss, rng);
  double prior_var = rig.priors.t.span() * rig.priors.t.span() / 12.0;  // 16875
  CHECK(l == doctest::Approx(prior_var).epsilon(0.08));
}

TEST_CASE("mixture loss degenerates correctly at the endpoints") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig, 2);
  LossSpec loss;
  loss.k_mc = 32;
  loss.mle_restarts = 2;

  SceneSpec spec;
  spec.width = 6;
  spec.height = 4;
  Rng srng(3);
  PathSampleSet scene = gen_two_bounce_scene(spec, srng);

  Rng a(21), b(21);
  double pure = estimate_design_loss(problem, rig.z, loss, a);
  double beta1 = mixture_design_loss(problem, rig.z, loss, {scene}, 1.0, b);
  CHECK(pure == beta1);  // exact mixture degeneracy

  Rng c(22);
  double beta0 = mixture_design_loss(problem, rig.z, loss, {scene}, 0.0, c);
  CHECK(std::isfinite(beta0));
  Rng d(23);
  CHECK_THROWS_AS(mixture_design_loss(problem, rig.z, loss, {}, 0.5, d), std::invalid_argument);
  Rng e(24);
  CHECK_THROWS_AS(mixture_design_loss(problem, rig.z, loss, {scene}, 1.5, e),
                  std::invalid_argument);
}

TEST_CASE("tree estimator is accepted by the loss loop") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig);
  RegressionTree tree = constant_tree(275.0, 4);
  LossSpec loss;
  loss.estimator = LossSpec::Estimator::tree;
  loss.tree = &tree;
  loss.k_mc = 512;
  Rng rng(9);
  double l = estimate_design_loss(problem, rig.z, loss, rng);
  double prior_var = rig.priors.t.span() * rig.priors.t.span() / 12.0;
  CHECK(l == doctest::Approx(prior_var).epsilon(0.12));  // constant predictor baseline

  LossSpec missing;
  missing.estimator = LossSpec::Estimator::tree;
  Rng rng2(10);
  CHECK_THROWS_AS(estimate_design_loss(problem, rig.z, missing, rng2), std::invalid_argument);
}

TEST_CASE("fixed-temperature chain matches the Gibbs distribution on a 2x1 toy") {
  // states (z0, z1) in {0,1}^2 with V pinned at 1; analytic losses
  auto table = [](const Eigen::MatrixXi& z) {
    static const double f[2][2] = {{2.0, 1.0}, {0.5, 0.2}};
    return f[z(0, 0)][z(1, 0)];
  };
  DesignLoss loss = [&](const Eigen::MatrixXi& z, Rng&) { return table(z); };
  AnnealSchedule fixed{1.0, 0.999999, 400000};  // essentially constant T = 1
  AnnealOptions opts;
  opts.kernel_probs = {0.0, 0.0, 0.5, 0.5, 0.0, 0.0};
  DesignConstraints c{10, 2};
  Rng rng(123);
  AnnealResult result = anneal_design(2, 1, c, fixed, loss, rng, opts);

  // occupancy via the loss value of the current state per iteration
  std::map<double, double> occupancy;
  for (const auto& row : result.trace) occupancy[row.current_loss] += 1.0;
  double total = static_cast<double>(result.trace.size());

  // Gibbs over the enumerated states at T = 1
  std::map<double, double> gibbs;
  double norm = 0.0;
  for (double f : {2.0, 1.0, 0.5, 0.2}) norm += std::exp(-f);
  for (double f : {2.0, 1.0, 0.5, 0.2}) gibbs[f] = std::exp(-f) / norm;

  double tv = 0.0;
  for (const auto& [f, p] : gibbs) tv += std::abs(p - occupancy[f] / total);
  tv *= 0.5;
  CHECK(tv < 0.05);
  CHECK(result.accepted > 0);
}

TEST_CASE("proposal kernels never evaluate an infeasible design") {
  DesignConstraints c{12, 2};
  long evaluated = 0;
  DesignLoss loss = [&](const Eigen::MatrixXi& z, Rng&) {
    CHECK(design_feasible(z, c));
    ++evaluated;
    return std::abs(static_cast<double>(z.sum()) - 5.0);
  };
  AnnealSchedule schedule{20.0, 0.01, 100000};
  Rng rng(99);
  AnnealResult result = anneal_design(4, 3, c, schedule, loss, rng);
  CHECK(evaluated > 1000);
  CHECK(result.proposals == schedule.iterations);
  CHECK(result.best_loss <= 1.0);
  CHECK(design_feasible(result.best_z, c));

  // best-seen trace never increases
  double best = 1e300;
  for (const auto& row : result.trace) {
    CHECK(row.best_loss <= best + 1e-12);
    best = row.best_loss;
  }
  CHECK(result.trace.front().temperature == doctest::Approx(20.0));
}

TEST_CASE("annealing on the real loss beats the closed start") {
  const TestRig& rig = default_rig();
  DesignProblem problem = rig_problem(rig, 2);
  LossSpec loss;
  loss.k_mc = 16;
  loss.mle_restarts = 2;
  AnnealSchedule schedule{20.0, 0.01, 800};
  Rng rng(17);
  AnnealResult result = anneal_design(problem, 2, schedule, loss, rng);
  double prior_var = rig.priors.t.span() * rig.priors.t.span() / 12.0;
  CHECK(result.best_loss < 0.5 * prior_var);
  CHECK(design_feasible(result.best_z, problem.constraints));
}
