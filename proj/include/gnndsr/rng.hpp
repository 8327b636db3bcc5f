#pragma once

#include <cstdint>
#include <random>

namespace gnndsr {

// All randomness in the library flows through explicitly seeded mt19937_64
// generators. The helpers below avoid std::uniform_*_distribution, whose
// output is implementation-defined, so a seed reproduces bit-identical runs.

// Uniform double in [0, 1) using the top 53 bits of the generator.
inline double next_double(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * next_double(rng);
}

// Unbiased integer in [0, n) via rejection sampling.
inline std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

// SplitMix64 step, used to derive independent seed streams from one seed.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + stream * 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace gnndsr
