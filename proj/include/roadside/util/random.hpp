#pragma once

#include <cstdint>
#include <random>

namespace roadside {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to derive independent substream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Seed for substream `stream` of `seed`. Streams of the same seed are
/// decorrelated, and the result does not depend on evaluation order.
constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x632BE59BD9B4E019ULL));
}

constexpr std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return substream_seed(substream_seed(seed, a), b);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(substream_seed(seed, stream));
}

/// Uniform in [0, 1) from a 64-bit hash value (53 significant bits).
constexpr double hash_to_unit(std::uint64_t h) {
  return static_cast<double>(h >> 11) * 0x1.0p-53;
}

/// Draw from Poisson(1) by inverse CDF on a uniform u in [0, 1).
inline int poisson_one(double u) {
  // P(K = k) = e^{-1} / k!
  double p = 0.36787944117144233;
  double cdf = p;
  int k = 0;
  while (u >= cdf && k < 20) {
    ++k;
    p /= k;
    cdf += p;
  }
  return k;
}

}  // namespace roadside
