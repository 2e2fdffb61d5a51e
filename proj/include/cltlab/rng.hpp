#pragma once

#include <cmath>
#include <cstdint>

namespace cltlab {

// Counter-based pseudo-random stream (SplitMix64 over a Weyl sequence).
// Each (seed, stream) pair yields an independent, reproducible stream, so
// work can be split across threads by stream index with results identical
// to a serial run.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t stream) {
    state_ = mix(seed ^ 0x9E3779B97F4A7C15ULL) ^ mix(stream + 0x2545F4914F6CDD1DULL);
    state_ = mix(state_);
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  // Uniform on [0,1), 53-bit resolution.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform on (0,1], safe for log().
  double uniform01_open0() { return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53; }

  // Standard normal via Box-Muller; second value of each pair is cached.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = uniform01_open0();
    double u2 = uniform01();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace cltlab
