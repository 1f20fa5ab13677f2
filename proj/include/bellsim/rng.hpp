#pragma once

#include <cmath>
#include <cstdint>

namespace bellsim {

/// Counter-based 64-bit generator (SplitMix64 in counter mode).
///
/// The state advances by a fixed odd constant and the output is a bijective
/// finalizer of the state, so the k-th variate of a stream is a pure function
/// of (seed, k).  Stream splitting: each trajectory uses the seed
/// base_seed + trajectory_index (the finalizer decorrelates adjacent seeds),
/// which makes ensembles reproducible independent of worker count.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : state_(mix(seed ^ kInit)) {}

  std::uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    return mix(state_);
  }

  /// Uniform in [0, 1) with 53-bit resolution.
  double u01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unit-mean exponential variate.
  double exponential() { return -std::log1p(-u01()); }

  double normal() {
    // Marsaglia polar; consumes a variable number of uniforms.
    double u, v, s;
    do {
      u = 2.0 * u01() - 1.0;
      v = 2.0 * u01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    return u * std::sqrt(-2.0 * std::log(s) / s);
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  static constexpr std::uint64_t kInit = 0x243f6a8885a308d3ull;

  std::uint64_t state_;
};

}  // namespace bellsim
