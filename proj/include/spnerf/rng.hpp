#pragma once

#include <cmath>
#include <cstdint>

namespace spnerf {

// Deterministic RNG with a fixed algorithm so results do not depend on the
// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed + 0x9e3779b97f4a7c15ULL) {}

  static Rng substream(uint64_t seed, uint64_t stream) {
    Rng r(seed);
    r.state_ ^= splitmix(stream ^ 0xd1b54a32d192ed03ULL);
    return r;
  }

  uint64_t next_u64() {
    state_ = splitmix_step(state_);
    return mix(state_);
  }

  // Uniform in [0, 1).
  double next_double() { return (next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n), n >= 1. Rejection sampling keeps it unbiased.
  uint64_t next_below(uint64_t n) {
    uint64_t threshold = (0ULL - n) % n;
    for (;;) {
      uint64_t r = next_u64();
      if (r >= threshold) return r % n;
    }
  }

  // Standard normal via Box-Muller; caches the second deviate.
  double next_gaussian() {
    if (has_cached_) {
      has_cached_ = false;
      return cached_;
    }
    double u1, u2;
    do {
      u1 = next_double();
    } while (u1 <= 0.0);
    u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * M_PI * u2;
    cached_ = r * std::sin(theta);
    has_cached_ = true;
    return r * std::cos(theta);
  }

 private:
  static uint64_t splitmix_step(uint64_t x) { return x + 0x9e3779b97f4a7c15ULL; }

  static uint64_t mix(uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  static uint64_t splitmix(uint64_t x) { return mix(splitmix_step(x)); }

  uint64_t state_;
  double cached_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace spnerf
