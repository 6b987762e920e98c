// SPDX-License-Identifier: Apache-2.0
#include "tof/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace tof {

RunConfig RunConfig::from_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config file: " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return from_string(buf.str());
}

RunConfig RunConfig::from_string(const std::string& text) {
  RunConfig cfg;
  cfg.text_ = text;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      if (!split_ws(line).empty())
        throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
      continue;
    }
    auto keys = split_ws(line.substr(0, eq));
    if (keys.size() != 1)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": malformed key");
    cfg.values_[keys[0]] = split_ws(line.substr(eq + 1));
  }
  return cfg;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::get_string(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  if (it->second.size() != 1) throw ConfigError(key, "expected a single value");
  return it->second[0];
}

std::string RunConfig::get_string(const std::string& key, const std::string& fallback) const {
  return has(key) ? get_string(key) : fallback;
}

double RunConfig::get_double(const std::string& key) const {
  try {
    return std::stod(get_string(key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected a number");
  }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

int RunConfig::get_int(const std::string& key) const {
  try {
    return std::stoi(get_string(key));
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception&) {
    throw ConfigError(key, "expected an integer");
  }
}

int RunConfig::get_int(const std::string& key, int fallback) const {
  return has(key) ? get_int(key) : fallback;
}

Range RunConfig::get_range(const std::string& key, Range fallback) const {
  if (!has(key)) return fallback;
  auto vals = get_doubles(key);
  if (vals.size() != 2 || !(vals[1] > vals[0]))
    throw ConfigError(key, "expected 'lo hi' with lo < hi");
  return {vals[0], vals[1]};
}

std::vector<double> RunConfig::get_doubles(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "missing");
  std::vector<double> out;
  out.reserve(it->second.size());
  for (const auto& tok : it->second) {
    try {
      out.push_back(std::stod(tok));
    } catch (const std::exception&) {
      throw ConfigError(key, "expected numbers");
    }
  }
  return out;
}

PriorBox priors_from_config(const RunConfig& cfg) {
  PriorBox priors;
  priors.t = cfg.get_range("t_range", priors.t);
  priors.rho = cfg.get_range("rho_range", priors.rho);
  priors.lambda = cfg.get_range("lambda_range", priors.lambda);
  priors.delta_t2 = cfg.get_double("delta_t2", priors.delta_t2);
  priors.rho2_beta = cfg.get_double("rho2_beta", priors.rho2_beta);
  priors.validate();
  return priors;
}

NoiseParams noise_from_config(const RunConfig& cfg) {
  return NoiseParams(cfg.get_double("alpha", 1.0), cfg.get_double("K", 50.0));
}

InferenceOptions inference_options_from_config(const RunConfig& cfg, ModelKind kind) {
  InferenceOptions opts;
  opts.kind = kind;
  opts.restarts = kind == ModelKind::two_path ? cfg.get_int("tp_restarts", 0)
                                              : cfg.get_int("restarts", 0);
  opts.max_iters = cfg.get_int("max_iters", opts.max_iters);
  opts.grad_tol = cfg.get_double("grad_tol", opts.grad_tol);
  opts.barrier_b = cfg.get_double("barrier_b", opts.barrier_b);
  opts.map_barrier_b = cfg.get_double("map_barrier_b", opts.map_barrier_b);
  opts.ess_threshold = cfg.get_double("ess_threshold", opts.ess_threshold);
  opts.max_is_samples = cfg.get_int("max_is_samples", opts.max_is_samples);
  opts.gamma_inner = cfg.get_int("gamma_inner", opts.gamma_inner);
  opts.gamma_max_theta = cfg.get_int("gamma_max_theta", opts.gamma_max_theta);
  return opts;
}

DesignConstraints constraints_from_config(const RunConfig& cfg) {
  DesignConstraints c;
  c.k_shutter = cfg.get_int("k_shutter", c.k_shutter);
  c.k_sparsity = cfg.get_int("k_sparsity", c.k_sparsity);
  return c;
}

SceneSpec scene_from_config(const RunConfig& cfg) {
  SceneSpec spec;
  spec.width = cfg.get_int("scene_width", spec.width);
  spec.height = cfg.get_int("scene_height", spec.height);
  spec.object_dist = cfg.get_double("scene_object_dist", spec.object_dist);
  spec.depth_tilt = cfg.get_double("scene_depth_tilt", spec.depth_tilt);
  spec.wall_dist = cfg.get_double("scene_wall_dist", spec.wall_dist);
  spec.lateral_offset = cfg.get_double("scene_lateral_offset", spec.lateral_offset);
  spec.object_refl = cfg.get_double("scene_object_refl", spec.object_refl);
  spec.wall_refl = cfg.get_double("scene_wall_refl", spec.wall_refl);
  spec.kernel_gain = cfg.get_double("scene_kernel_gain", spec.kernel_gain);
  spec.ambient_tau = cfg.get_double("scene_ambient_tau", spec.ambient_tau);
  return spec;
}

CurveBuildSpec curve_spec_from_config(const RunConfig& cfg) {
  PriorBox priors = priors_from_config(cfg);
  double rise = cfg.get_double("pulse_rise_ns", 1.5);
  double plateau = cfg.get_double("pulse_plateau_ns", 4.0);
  double fall = cfg.get_double("pulse_fall_ns", 1.5);
  double amplitude = cfg.get_double("pulse_amplitude", 4.0e5);
  double step = cfg.get_double("pulse_grid_step_ns", 0.025);

  CurveBuildSpec spec{PulseProfile::trapezoid(rise, plateau, fall, amplitude, step),
                      {},
                      {},
                      cfg.get_int("n_channels", 4),
                      cfg.get_int("cheb_degree", 16),
                      cfg.get_double("ambient_gain", 1.0)};

  double margin = cfg.get_double("curve_margin", priors.delta_t2);
  spec.grid.t_min = priors.t.lo;
  spec.grid.t_max = priors.t.hi + margin;
  spec.grid.size = cfg.get_int("depth_grid_size", 1024);

  // catalog: cross product of delays and widths, plus one wide-open gate
  std::vector<double> delays, widths;
  if (cfg.has("catalog_delays_ns")) {
    delays = cfg.get_doubles("catalog_delays_ns");
  } else {
    double tau_max = spec.grid.t_max / kDepthCmPerNs;
    for (double d = 0.0; d <= tau_max; d += 2.0) delays.push_back(d);
  }
  if (cfg.has("catalog_widths_ns")) {
    widths = cfg.get_doubles("catalog_widths_ns");
  } else {
    widths = {12.0, 16.0, 24.0, 32.0};
  }
  for (double d : delays)
    for (double w : widths) spec.catalog.push_back({d, w});
  if (cfg.get_int("include_wide_element", 1) != 0) {
    double tau_max = spec.grid.t_max / kDepthCmPerNs;
    double pulse_tail = spec.pulse.duration();
    spec.catalog.push_back({0.0, tau_max + pulse_tail});
  }
  return spec;
}

Eigen::MatrixXi default_design(const BoxcarCatalog& catalog, const DepthGrid& grid, int n_channels,
                               const DesignConstraints& constraints) {
  if (catalog.empty()) throw std::invalid_argument("empty catalog");
  auto m = static_cast<int>(catalog.size());
  // widest gate serves as the shared base exposure; one staggered short gate
  // per channel tiles the range with rise/fall transitions
  int wide = 0;
  for (int j = 1; j < m; ++j) {
    if (catalog[static_cast<std::size_t>(j)].width_ns >
        catalog[static_cast<std::size_t>(wide)].width_ns)
      wide = j;
  }
  int per_channel = constraints.k_shutter / n_channels;
  int base_weight = std::max(1, per_channel / 4);
  int bump_weight = std::max(1, per_channel - base_weight);

  double tau_lo = grid.t_min / kDepthCmPerNs;
  double tau_hi = grid.t_max / kDepthCmPerNs;
  double span = tau_hi - tau_lo;
  Eigen::MatrixXi z = Eigen::MatrixXi::Zero(m, n_channels);
  for (int k = 0; k < n_channels; ++k) {
    double want_delay = std::max(0.0, tau_lo - 2.0 + k * span / n_channels);
    double want_width = 1.4 * span / n_channels;
    int bump = -1;
    double best = 0.0;
    for (int j = 0; j < m; ++j) {
      if (j == wide) continue;
      const auto& e = catalog[static_cast<std::size_t>(j)];
      double score = std::abs(e.delay_ns - want_delay) + std::abs(e.width_ns - want_width);
      if (bump < 0 || score < best) {
        bump = j;
        best = score;
      }
    }
    z(wide, k) += base_weight;
    if (bump >= 0) z(bump, k) += bump_weight;
  }
  while (z.sum() > constraints.k_shutter && z.maxCoeff() > 0) {
    for (int k = 0; k < n_channels && z.sum() > constraints.k_shutter; ++k)
      for (int j = 0; j < m && z.sum() > constraints.k_shutter; ++j)
        if (z(j, k) > 0) z(j, k) -= 1;
  }
  if (!design_feasible(z, constraints))
    throw std::runtime_error("default design infeasible under the given constraints");
  return z;
}

}  // namespace tof
