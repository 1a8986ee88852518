#pragma once

#include <cmath>
#include <cstdint>

#include "affmatch/errors.hpp"

namespace affmatch {

// Counter-based deterministic RNG (splitmix64 core). Streams are keyed by
// (seed, stream, substream) so independently keyed entities draw independent,
// reproducible sequences regardless of evaluation order or platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(mix(seed ^ 0x8f1bbcdcbfa53e0bULL)) {}

  static Rng keyed(std::uint64_t seed, std::uint64_t stream, std::uint64_t substream) {
    std::uint64_t s = mix(seed + 0x9e3779b97f4a7c15ULL * (stream + 1));
    s = mix(s + 0xbf58476d1ce4e5b9ULL * (substream + 1));
    return Rng(s, 0);
  }

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix(state_);
  }

  // Uniform in [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    if (lo > hi) throw ConfigError("uniform_int: empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  // Standard normal via Box-Muller; always consumes exactly two uniforms.
  double normal() {
    double u1 = uniform();
    const double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

 private:
  Rng(std::uint64_t s, int) : state_(s) {}

  static std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_;
};

}  // namespace affmatch
