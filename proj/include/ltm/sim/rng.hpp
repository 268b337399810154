#pragma once

#include <algorithm>
#include <cstdint>
#include <random>

#include "ltm/error.hpp"

namespace ltm::sim {

// SplitMix64 finalizer; used to derive independent seeds.
inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Portable seeded generator.
//
// The engine is std::mt19937_64, whose output sequence is fixed by the C++
// standard. The standard distributions are not, so every conversion below is
// done by hand with integer or basic floating arithmetic only; the same seed
// yields the same doubles on every conforming platform.
//
// Streams: stream(seed, k) seeds the engine with splitmix64(seed ^ splitmix64(k + 0x5EED)),
// giving one independent stream per trial (k = trial index + 1) alongside the
// session stream (k = 0).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

  static Rng stream(std::uint64_t seed, std::uint64_t stream_id) {
    return Rng(seed ^ splitmix64(stream_id + 0x5EEDULL));
  }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  bool bernoulli(double p) { return uniform() < p; }

  // Uniform integer in [lo, hi], via rejection on the top bits.
  int uniform_int(int lo, int hi) {
    require(lo <= hi, "uniform_int(): empty range");
    const std::uint64_t span = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % span;
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return lo + static_cast<int>(x % span);
  }

  // Approximately normal: Irwin-Hall sum of 12 uniforms. Tails are cut at
  // +/-6 sd, which the latency model clamps well inside anyway.
  double normal(double mean, double sd) {
    double s = 0.0;
    for (int i = 0; i < 12; ++i) s += uniform();
    return mean + sd * (s - 6.0);
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace ltm::sim
