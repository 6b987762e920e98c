// SPDX-License-Identifier: Apache-2.0
#include "tof/checks.hpp"

namespace tof {

namespace {

TestRig build_rig(int grid_size, double delay_step, std::vector<double> widths) {
  RunConfig cfg = RunConfig::from_string("");
  PriorBox priors = priors_from_config(cfg);
  NoiseParams noise;

  PulseProfile pulse = PulseProfile::trapezoid(1.5, 4.0, 1.5, 1.0e5, 0.025);
  DepthGrid grid{priors.t.lo, priors.t.hi + priors.delta_t2, grid_size};
  BoxcarCatalog catalog;
  double tau_max = grid.t_max / kDepthCmPerNs;
  for (double d = 0.0; d <= tau_max; d += delay_step)
    for (double w : widths) catalog.push_back({d, w});
  catalog.push_back({0.0, tau_max + pulse.duration()});

  Eigen::MatrixXd q = boxcar_basis_matrix(catalog, pulse, grid);
  DesignConstraints constraints;
  Eigen::MatrixXi z = default_design(catalog, grid, 4, constraints);
  ResponseCurveSet curves = compose_curves(q, z, catalog, grid, 16, 1.0);
  return TestRig{std::move(pulse), std::move(catalog), grid,
                 std::move(q),     std::move(z),       std::move(curves),
                 priors,           noise};
}

}  // namespace

const TestRig& default_rig() {
  static const TestRig rig = build_rig(1024, 2.0, {12.0, 16.0, 24.0, 32.0});
  return rig;
}

const TestRig& small_rig() {
  static const TestRig rig = build_rig(384, 6.0, {12.0, 24.0});
  return rig;
}

std::vector<CheckResult> check_curves(const CheckScale&) { return {}; }
std::vector<CheckResult> check_model(const CheckScale&) { return {}; }
std::vector<CheckResult> check_inference(const CheckScale&) { return {}; }
std::vector<CheckResult> check_regress(const CheckScale&) { return {}; }
std::vector<CheckResult> check_design(const CheckScale&) { return {}; }
std::vector<CheckResult> check_sim(const CheckScale&) { return {}; }

std::vector<CheckResult> check_all(const CheckScale& scale) {
  std::vector<CheckResult> out;
  for (auto* fn : {check_curves, check_model, check_inference, check_regress, check_design,
                   check_sim}) {
    auto part = fn(scale);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

}  // namespace tof
