// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tof/design.hpp"

namespace tof {

// Raised for missing or malformed configuration keys; the CLI maps it to
// exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& key, const std::string& what)
      : std::runtime_error("config key '" + key + "': " + what), key(key) {}
  std::string key;
};

// Shared human-readable configuration: "key = value..." lines, '#' comments.
class RunConfig {
 public:
  static RunConfig from_file(const std::string& path);
  static RunConfig from_string(const std::string& text);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key) const;
  int get_int(const std::string& key, int fallback) const;
  Range get_range(const std::string& key, Range fallback) const;
  std::vector<double> get_doubles(const std::string& key) const;

  /// FNV-1a hash of the raw config text; stamped into output headers.
  std::string hash() const { return hex64(fnv1a64(text_)); }
  const std::string& text() const { return text_; }

 private:
  std::map<std::string, std::vector<std::string>> values_;
  std::string text_;
};

PriorBox priors_from_config(const RunConfig& cfg);
NoiseParams noise_from_config(const RunConfig& cfg);
InferenceOptions inference_options_from_config(const RunConfig& cfg, ModelKind kind);
DesignConstraints constraints_from_config(const RunConfig& cfg);
SceneSpec scene_from_config(const RunConfig& cfg);

// Curve construction inputs assembled from the config. The depth grid is
// extended past the prior's t range by curve_margin (default delta_t2) so
// two-path depths stay inside the valid range.
struct CurveBuildSpec {
  PulseProfile pulse;
  BoxcarCatalog catalog;
  DepthGrid grid;
  int n_channels = 4;
  int degree = 16;
  double ambient_gain = 1.0;
};

CurveBuildSpec curve_spec_from_config(const RunConfig& cfg);

/// Hand-designed fallback exposure profile: every channel gets a wide-open
/// base allocation plus one staggered gate, keeping all curves positive.
Eigen::MatrixXi default_design(const BoxcarCatalog& catalog, const DepthGrid& grid, int n_channels,
                               const DesignConstraints& constraints);

}  // namespace tof
