#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "safeload/text.hpp"

namespace safeload {

/// Deterministic PRNG with explicit distribution math. Avoids the standard
/// <random> distributions because their output is implementation-defined;
/// every draw here is a pure function of the stream state.
class Rng {
 public:
  explicit Rng(std::uint64_t state) : state_(state) {}

  /// Named sub-stream of a root seed. Streams with different names or
  /// indices are independent for practical purposes.
  static Rng stream(std::uint64_t seed, std::string_view name,
                    std::uint64_t index = 0) {
    std::uint64_t h = fnv1a64(name);
    h ^= seed + 0x9e3779b97f4a7c15ULL;
    h ^= index * 0xbf58476d1ce4e5b9ULL + 0x94d049bb133111ebULL;
    Rng r(h);
    r.next_u64();
    r.next_u64();
    return r;
  }

  Rng substream(std::string_view name, std::uint64_t index = 0) {
    return stream(next_u64(), name, index);
  }

  // splitmix64
  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  std::int64_t range(std::int64_t lo, std::int64_t hi) {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(next_u64() % span);
  }

  bool chance(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (spare discarded to keep draws
  /// position-independent).
  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643 * u2);
  }

  /// Lognormal parameterized by median and sigma of the underlying normal.
  double lognormal(double median, double sigma_ln) {
    return median * std::exp(sigma_ln * normal());
  }

 private:
  std::uint64_t state_;
};

}  // namespace safeload
