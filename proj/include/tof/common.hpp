// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

namespace tof {

inline constexpr const char* kToolVersion = "0.1.0";

// Canonical time<->distance constant: depth in cm equals round-trip time in
// ns times this constant (half the speed of light, 29.9792458 cm/ns).
inline constexpr double kDepthCmPerNs = 14.9896229;

/// Closed numeric range [lo, hi].
struct Range {
  double lo = 0.0;
  double hi = 0.0;
  double span() const { return hi - lo; }
  bool contains(double x) const { return x >= lo && x <= hi; }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Deterministic random stream. Distributions are implemented on top of the
// raw engine so that sequences do not depend on the standard library's
// unspecified distribution algorithms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : root_(splitmix64(seed)), engine_(root_) {}

  // Independent substream; depends only on the seed and index, not on how
  // many draws already happened on this stream.
  Rng fork(std::uint64_t index) const {
    Rng child(0);
    child.root_ = splitmix64(root_ ^ splitmix64(index + 0x9e3779b9ULL));
    child.engine_.seed(child.root_);
    return child;
  }

  double uniform() {  // in [0, 1)
    return (engine_() >> 11) * 0x1.0p-53;
  }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double uniform_pos() {  // in (0, 1]
    return 1.0 - uniform();
  }

  double normal() {
    // Box-Muller without the cached spare: stream state stays a pure
    // function of the number of draws.
    double u1 = uniform_pos();
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }
  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  // Beta(1, beta) via inverse CDF.
  double beta_one(double beta) {
    return 1.0 - std::pow(1.0 - uniform(), 1.0 / beta);
  }

  std::uint64_t next_u64() { return engine_(); }
  std::size_t index(std::size_t n) {  // uniform in [0, n)
    return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
  }

 private:
  std::uint64_t root_;
  std::mt19937_64 engine_;
};

// parallel_for(n, workers, fn): runs fn(i) for i in [0, n). Work is split in
// contiguous chunks; fn must be safe to call concurrently for distinct i.
void parallel_for(std::size_t n, int workers, const std::function<void(std::size_t)>& fn);

int default_workers();

std::uint64_t fnv1a64(std::string_view data);
std::string hex64(std::uint64_t v);

// Prints a double with 17 significant digits: parsing the result yields the
// identical bit pattern, so text round trips are value-exact.
std::string fmt_g17(double v);

std::vector<std::string> split_ws(const std::string& line);

struct Quantiles {
  double q25 = 0.0;
  double q50 = 0.0;
  double q75 = 0.0;
};

/// 25/50/75% quantiles with linear interpolation (takes values by copy).
Quantiles compute_quantiles(std::vector<double> values);
double median(std::vector<double> values);

// Shared provenance header carried by every artifact file.
struct FileMeta {
  std::string tool_version = kToolVersion;
  std::string config_hash = "none";
  std::string seed = "0";
};

}  // namespace tof
