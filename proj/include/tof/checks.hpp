// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

#include "tof/config.hpp"

namespace tof {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

struct CheckScale {
  // Full scale reproduces the documented thresholds; reduced scale keeps the
  // per-module suites fast for routine runs.
  bool full = false;
  int workers = 1;
  std::uint64_t seed = 2026;
};

std::vector<CheckResult> check_curves(const CheckScale& scale);
std::vector<CheckResult> check_model(const CheckScale& scale);
std::vector<CheckResult> check_inference(const CheckScale& scale);
std::vector<CheckResult> check_regress(const CheckScale& scale);
std::vector<CheckResult> check_design(const CheckScale& scale);
std::vector<CheckResult> check_sim(const CheckScale& scale);
std::vector<CheckResult> check_all(const CheckScale& scale);

// Shared toy fixtures used by the check suites, the acceptance suite and the
// CLI defaults.
struct TestRig {
  PulseProfile pulse;
  BoxcarCatalog catalog;
  DepthGrid grid;
  Eigen::MatrixXd q;
  Eigen::MatrixXi z;
  ResponseCurveSet curves;
  PriorBox priors;
  NoiseParams noise;
};

/// Standard 4-channel rig spanning [50, 650] cm with default priors/noise.
const TestRig& default_rig();

/// Reduced rig for smoke tests: coarser grid, fewer catalog entries.
const TestRig& small_rig();

}  // namespace tof
