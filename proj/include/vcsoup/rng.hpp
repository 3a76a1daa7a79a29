#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>
#include <string_view>

namespace vcsoup {

// 64-bit FNV-1a. Used for substream derivation and artifact digests.
inline uint64_t fnv1a64(std::string_view bytes,
                        uint64_t h = 0xcbf29ce484222325ull) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

// Derives an independent stream seed from (root seed, stream name).
inline uint64_t substream_seed(uint64_t seed, std::string_view name) {
  uint64_t h = fnv1a64(name);
  // splitmix64 finalizer over the combined value
  uint64_t z = seed ^ (h + 0x9e3779b97f4a7c15ull);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// Deterministic RNG. Gaussian draws use Box-Muller on explicit uniforms so
// streams are identical across standard library implementations, and there
// is no cached second draw to leak state between calls.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(seed) {}

  static Rng substream(uint64_t seed, std::string_view name) {
    return Rng(substream_seed(seed, name));
  }

  // uniform in [0, 1)
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double normal() {
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * std::numbers::pi * u2);
  }

  // unbiased integer in [0, n)
  uint64_t uniform_index(uint64_t n) {
    const uint64_t max = std::numeric_limits<uint64_t>::max();
    const uint64_t limit = max - max % n;
    uint64_t x = engine_();
    while (x >= limit) x = engine_();
    return x % n;
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace vcsoup
