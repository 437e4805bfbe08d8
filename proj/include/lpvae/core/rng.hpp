#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace lpvae {

// Deterministic, implementation-independent random stream.
//
// All randomness in the library flows through this generator so that a run is
// reproducible from its seed alone, independent of the standard library's
// distribution internals. Core generator is splitmix64 feeding xoshiro-style
// output; normal draws use Box-Muller.
class Rng {
 public:
  explicit Rng(uint64_t seed = 0) { reseed(seed); }

  void reseed(uint64_t seed) {
    state_ = seed;
    has_cached_normal_ = false;
    // Warm up so nearby seeds decorrelate.
    next_u64();
    next_u64();
  }

  uint64_t next_u64() {
    uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n). Rejection sampling keeps it unbiased.
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) return 0;
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_cached_normal_) {
      has_cached_normal_ = false;
      return cached_normal_;
    }
    double u1, u2;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    cached_normal_ = r * std::sin(a);
    has_cached_normal_ = true;
    return r * std::cos(a);
  }

  // Independent child stream; `stream` tags the purpose (init, shuffle, ...).
  Rng fork(uint64_t stream) const {
    Rng child;
    child.reseed(state_ ^ (0xd1b54a32d192ed03ull * (stream + 1)));
    return child;
  }

 private:
  uint64_t state_ = 0;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace lpvae
