#pragma once

#include <cstdint>
#include <random>

namespace hybridboost {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; turns (master seed, offset) into an independent stream seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t offset) {
  std::uint64_t z = master + 0x9E3779B97F4A7C15ULL * (offset + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

/// Uniform double in [0, 1) built from the top 53 bits of one draw.
inline double uniform01(Rng& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
  return lo + (hi - lo) * uniform01(rng);
}

inline double standard_normal(Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  return dist(rng);
}

}  // namespace hybridboost
