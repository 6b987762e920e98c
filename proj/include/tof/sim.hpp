// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "tof/inference.hpp"

namespace tof {

// One weighted light-path sample. The weight convention is fixed by the file
// format: w already contains the distance decay d(t), so the forward model
// divides it back out before applying C (which contains d(t) as well).
struct PathSample {
  double weight = 0.0;
  int segments = 2;  // 2 = direct, > 2 = multipath
  double t = 0.0;    // depth-equivalent total path time (cm)
};

struct PixelPaths {
  double tau = 0.0;  // per-pixel ambient level
  std::vector<PathSample> paths;
};

struct PathSampleSet {
  int width = 0;
  int height = 0;
  std::vector<PixelPaths> pixels;    // row-major
  std::vector<double> ground_truth;  // direct depth per pixel; empty when unknown
  FileMeta meta;

  const PixelPaths& at(int x, int y) const {
    return pixels[static_cast<std::size_t>(y) * static_cast<std::size_t>(width) +
                  static_cast<std::size_t>(x)];
  }
};

/// mu = tau * A + sum_i (w_i / d(t_i)) * C(t_i)
Eigen::VectorXd forward_response(const PixelPaths& pixel, const ResponseCurveSet& curves);

struct Strata {
  std::vector<PathSample> direct;     // segments == 2
  std::vector<PathSample> multipath;  // segments > 2
};

Strata stratify(const std::vector<PathSample>& samples);

/// Priority sampling: keeps at most capacity items with adjusted weights so
/// that every subset-sum estimate stays unbiased.
std::vector<PathSample> priority_sample(const std::vector<PathSample>& stream,
                                        std::size_t capacity, Rng& rng);

/// Stratified thinning: priority-sample each stratum to per_stratum items.
PixelPaths thin_pixel(const PixelPaths& pixel, std::size_t per_stratum, Rng& rng);

/// Fraction of decay-compensated intensity arriving over indirect paths.
double multipath_ratio(const PixelPaths& pixel);

// Analytic stand-in scene: a tilted object plane in front of a reflective
// wall. Every pixel gets one direct path and one wall-bounce path.
struct SceneSpec {
  int width = 64;
  int height = 48;
  double object_dist = 150.0;    // cm at the image center
  double depth_tilt = 30.0;      // cm of depth variation across the image height
  double wall_dist = 250.0;      // cm
  double lateral_offset = 80.0;  // cm, wall-bounce arm at the image edge
  double object_refl = 0.8;
  double wall_refl = 1.2;
  double kernel_gain = 0.6;      // scales the bounce geometry factor
  double ambient_tau = 0.3;
};

PathSampleSet gen_two_bounce_scene(const SceneSpec& spec, Rng& rng);

struct BenchmarkOptions {
  Method method = Method::bayes;
  int workers = 1;
  bool with_noise = true;
};

struct PixelOutcome {
  double truth = 0.0;
  double estimate = 0.0;
  double abs_error = 0.0;
  double sigma = 0.0;
  double gamma = 0.0;
  double mp_ratio = 0.0;
};

struct BenchmarkResult {
  int width = 0;
  int height = 0;
  std::vector<PixelOutcome> pixels;
  Quantiles abs_error_quantiles;
};

/// Simulates noisy responses from the path samples and runs the configured
/// inference per pixel. The model kind (SP/TP) comes from iopts.kind.
BenchmarkResult scene_benchmark(const PathSampleSet& scene, const ResponseCurveSet& curves,
                                const NoiseParams& noise, const PriorBox& priors,
                                const InferenceOptions& iopts, const BenchmarkOptions& opts,
                                Rng& rng);

// Path-sample file: per pixel "pixel x y tau N" then N lines "w L t".
void write_path_samples(std::ostream& os, const PathSampleSet& set);
PathSampleSet read_path_samples(std::istream& is);
void save_path_samples(const std::string& path, const PathSampleSet& set);
PathSampleSet load_path_samples(const std::string& path);

}  // namespace tof
