// SPDX-License-Identifier: Apache-2.0
#include "tof/sim.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace tof {

Eigen::VectorXd forward_response(const PixelPaths& pixel, const ResponseCurveSet& curves) {
  Eigen::VectorXd mu = pixel.tau * curves.ambient();
  for (const auto& p : pixel.paths) {
    if (p.weight == 0.0) continue;
    mu += (p.weight / distance_decay(p.t)) * curves.values(p.t);
  }
  return mu;
}

Strata stratify(const std::vector<PathSample>& samples) {
  Strata out;
  for (const auto& s : samples) {
    if (s.segments == 2)
      out.direct.push_back(s);
    else
      out.multipath.push_back(s);
  }
  return out;
}

std::vector<PathSample> priority_sample(const std::vector<PathSample>& stream,
                                        std::size_t capacity, Rng& rng) {
  if (capacity == 0) throw std::invalid_argument("priority sampling capacity must be >= 1");
  if (stream.size() <= capacity) return stream;

  struct Entry {
    double priority;
    std::size_t index;
  };
  std::vector<Entry> entries;
  entries.reserve(stream.size());
  for (std::size_t i = 0; i < stream.size(); ++i) {
    double u = rng.uniform_pos();
    entries.push_back({stream[i].weight / u, i});
  }
  // top (capacity + 1) priorities; the extra one supplies the threshold
  std::nth_element(entries.begin(), entries.begin() + static_cast<std::ptrdiff_t>(capacity),
                   entries.end(),
                   [](const Entry& a, const Entry& b) { return a.priority > b.priority; });
  double threshold = entries[capacity].priority;
  std::vector<PathSample> kept;
  kept.reserve(capacity);
  for (std::size_t i = 0; i < capacity; ++i) {
    PathSample s = stream[entries[i].index];
    s.weight = std::max(s.weight, threshold);
    kept.push_back(s);
  }
  // deterministic order for reproducible files
  std::sort(kept.begin(), kept.end(), [](const PathSample& a, const PathSample& b) {
    if (a.t != b.t) return a.t < b.t;
    return a.weight < b.weight;
  });
  return kept;
}

PixelPaths thin_pixel(const PixelPaths& pixel, std::size_t per_stratum, Rng& rng) {
  Strata strata = stratify(pixel.paths);
  PixelPaths out;
  out.tau = pixel.tau;
  auto direct = priority_sample(strata.direct, per_stratum, rng);
  auto indirect = priority_sample(strata.multipath, per_stratum, rng);
  out.paths.reserve(direct.size() + indirect.size());
  out.paths.insert(out.paths.end(), direct.begin(), direct.end());
  out.paths.insert(out.paths.end(), indirect.begin(), indirect.end());
  return out;
}

double multipath_ratio(const PixelPaths& pixel) {
  double direct = 0.0, indirect = 0.0;
  for (const auto& p : pixel.paths) {
    double contribution = p.weight / distance_decay(p.t);
    if (p.segments == 2)
      direct += contribution;
    else
      indirect += contribution;
  }
  double total = direct + indirect;
  if (!(total > 0.0)) throw std::invalid_argument("multipath ratio of zero total contribution");
  return indirect / total;
}

PathSampleSet gen_two_bounce_scene(const SceneSpec& spec, Rng& rng) {
  (void)rng;  // the scene is analytic; rng kept for future stochastic variants
  if (spec.width < 1 || spec.height < 1) throw std::invalid_argument("empty scene grid");
  if (spec.wall_dist <= spec.object_dist)
    throw std::invalid_argument("wall must sit behind the object");
  PathSampleSet set;
  set.width = spec.width;
  set.height = spec.height;
  set.pixels.resize(static_cast<std::size_t>(spec.width) * static_cast<std::size_t>(spec.height));
  set.ground_truth.resize(set.pixels.size());

  for (int y = 0; y < spec.height; ++y) {
    double v = spec.height > 1 ? 2.0 * y / (spec.height - 1) - 1.0 : 0.0;
    for (int x = 0; x < spec.width; ++x) {
      double u = spec.width > 1 ? 2.0 * x / (spec.width - 1) - 1.0 : 0.0;
      double t_direct = spec.object_dist + 0.5 * spec.depth_tilt * v;

      // Wall bounce: emitter -> wall point (lateral arm L) -> object -> camera.
      // Depth-equivalent path time is half the total geometric length.
      double arm = spec.lateral_offset * (0.3 + 0.7 * std::abs(u));
      double r_wall = std::hypot(spec.wall_dist, arm);
      double r_back = std::hypot(spec.wall_dist - t_direct, arm);
      double t_indirect = 0.5 * (r_wall + r_back + t_direct);

      // Lambertian-style bounce kernel: squared cosines of the incidence
      // angles at the wall, scaled by kernel_gain.
      double cos_in = spec.wall_dist / r_wall;
      double cos_out = (spec.wall_dist - t_direct) / r_back;
      double geom = spec.kernel_gain * cos_in * cos_in * cos_out * cos_out;

      PixelPaths pixel;
      pixel.tau = spec.ambient_tau;
      pixel.paths.push_back({spec.object_refl * distance_decay(t_direct), 2, t_direct});
      pixel.paths.push_back(
          {spec.object_refl * spec.wall_refl * geom * distance_decay(t_indirect), 3, t_indirect});
      auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(spec.width) +
                 static_cast<std::size_t>(x);
      set.pixels[idx] = std::move(pixel);
      set.ground_truth[idx] = t_direct;
    }
  }
  return set;
}

BenchmarkResult scene_benchmark(const PathSampleSet& scene, const ResponseCurveSet& curves,
                                const NoiseParams& noise, const PriorBox& priors,
                                const InferenceOptions& iopts, const BenchmarkOptions& opts,
                                Rng& rng) {
  if (scene.pixels.empty()) throw std::invalid_argument("empty scene");
  if (scene.ground_truth.size() != scene.pixels.size())
    throw std::invalid_argument("scene benchmark needs ground truth");
  Inference inference(curves, noise, priors, iopts);

  BenchmarkResult result;
  result.width = scene.width;
  result.height = scene.height;
  result.pixels.resize(scene.pixels.size());
  std::uint64_t base = rng.next_u64();

  parallel_for(scene.pixels.size(), opts.workers, [&](std::size_t i) {
    Rng local = Rng(base).fork(i);
    const PixelPaths& pixel = scene.pixels[i];
    Eigen::VectorXd mu = forward_response(pixel, curves);
    Eigen::VectorXd response = mu;
    if (opts.with_noise) {
      for (Eigen::Index c = 0; c < mu.size(); ++c)
        response[c] = mu[c] + std::sqrt(model_variance(mu[c], noise)) * local.normal();
    }
    Estimate est = inference.run(opts.method, response, local);
    PixelOutcome& out = result.pixels[i];
    out.truth = scene.ground_truth[i];
    out.estimate = est.theta.t;
    out.abs_error = std::abs(out.estimate - out.truth);
    out.sigma = est.sigma_t;
    out.gamma = est.gamma;
    out.mp_ratio = multipath_ratio(pixel);
  });

  std::vector<double> errs;
  errs.reserve(result.pixels.size());
  for (const auto& p : result.pixels) errs.push_back(p.abs_error);
  result.abs_error_quantiles = compute_quantiles(std::move(errs));
  return result;
}

void write_path_samples(std::ostream& os, const PathSampleSet& set) {
  os << "tofpaths 1\n";
  os << "version " << set.meta.tool_version << "\n";
  os << "config_hash " << set.meta.config_hash << "\n";
  os << "seed " << set.meta.seed << "\n";
  os << "dims " << set.width << " " << set.height << "\n";
  for (int y = 0; y < set.height; ++y) {
    for (int x = 0; x < set.width; ++x) {
      const PixelPaths& pixel = set.at(x, y);
      os << "pixel " << x << " " << y << " " << fmt_g17(pixel.tau) << " " << pixel.paths.size()
         << "\n";
      for (const auto& p : pixel.paths)
        os << fmt_g17(p.weight) << " " << p.segments << " " << fmt_g17(p.t) << "\n";
    }
  }
  os << "end\n";
}

PathSampleSet read_path_samples(std::istream& is) {
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(is, line))
      throw std::runtime_error(std::string("path file truncated at ") + what);
    return split_ws(line);
  };
  auto magic = next("magic");
  if (magic.size() != 2 || magic[0] != "tofpaths" || magic[1] != "1")
    throw std::runtime_error("unsupported path-sample file");
  PathSampleSet set;
  set.meta.tool_version = next("version").at(1);
  set.meta.config_hash = next("config_hash").at(1);
  set.meta.seed = next("seed").at(1);
  auto dims = next("dims");
  set.width = std::stoi(dims.at(1));
  set.height = std::stoi(dims.at(2));
  set.pixels.resize(static_cast<std::size_t>(set.width) * static_cast<std::size_t>(set.height));
  for (std::size_t i = 0; i < set.pixels.size(); ++i) {
    auto head = next("pixel");
    if (head.at(0) != "pixel") throw std::runtime_error("path file: expected pixel header");
    int x = std::stoi(head.at(1));
    int y = std::stoi(head.at(2));
    auto idx = static_cast<std::size_t>(y) * static_cast<std::size_t>(set.width) +
               static_cast<std::size_t>(x);
    PixelPaths& pixel = set.pixels.at(idx);
    pixel.tau = std::stod(head.at(3));
    auto count = std::stoul(head.at(4));
    pixel.paths.resize(count);
    for (auto& p : pixel.paths) {
      auto row = next("path");
      p.weight = std::stod(row.at(0));
      p.segments = std::stoi(row.at(1));
      p.t = std::stod(row.at(2));
    }
  }
  return set;
}

void save_path_samples(const std::string& path, const PathSampleSet& set) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open for writing: " + path);
  write_path_samples(os, set);
}

PathSampleSet load_path_samples(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open path-sample file: " + path);
  return read_path_samples(is);
}

}  // namespace tof
