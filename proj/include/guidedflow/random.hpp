#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace guidedflow {

// Deterministic helpers used wherever seeded randomness is required.
// std::mt19937_64 output is pinned by the standard; the reductions below
// avoid the implementation-defined std distributions so sampled values
// are identical across standard libraries.

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

/// Uniform double in [0, 1) from one engine draw.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

/// Uniform double in [lo, hi).
inline double uniform_real(std::mt19937_64& rng, double lo, double hi) {
  return lo + uniform01(rng) * (hi - lo);
}

/// Uniform integer in [0, n) by rejection; n must be >= 1.
inline std::uint64_t uniform_below(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = ~std::uint64_t(0) - (~std::uint64_t(0) % n);
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

/// Stable per-item substream seed (e.g. one stream per scene).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view item) {
  return splitmix64(base ^ fnv1a64(item));
}

}  // namespace guidedflow
