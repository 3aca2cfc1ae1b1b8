#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace priordepth {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Independent deterministic generator for a (seed, stream) pair.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0) {
  return std::mt19937_64(splitmix64(splitmix64(seed) + 0x632be59bd9b4e019ULL * stream));
}

// Draw helpers below avoid std::*_distribution so that sequences are
// reproducible across standard libraries, not just across runs.

// Uniform double in [0, 1).
inline double rand_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double rand_uniform(std::mt19937_64& rng, double lo, double hi) {
  return lo + (hi - lo) * rand_unit(rng);
}

// Uniform integer in [0, n)
inline std::size_t rand_index(std::mt19937_64& rng, std::size_t n) {
  return static_cast<std::size_t>(rng() % n);
}

// Uniform integer in [lo, hi] inclusive.
inline int rand_int(std::mt19937_64& rng, int lo, int hi) {
  return lo + static_cast<int>(rand_index(rng, static_cast<std::size_t>(hi - lo + 1)));
}

// Standard normal via Box-Muller.
inline double rand_normal(std::mt19937_64& rng) {
  double u1 = rand_unit(rng);
  while (u1 <= 0.0) u1 = rand_unit(rng);
  const double u2 = rand_unit(rng);
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
}

// Partial Fisher-Yates: k distinct indices out of [0, n), in selection order.
inline std::vector<std::size_t> sample_indices(std::mt19937_64& rng, std::size_t n,
                                               std::size_t k) {
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  if (k > n) k = n;
  for (std::size_t i = 0; i < k; ++i) {
    const std::size_t j = i + rand_index(rng, n - i);
    std::swap(idx[i], idx[j]);
  }
  idx.resize(k);
  return idx;
}

}  // namespace priordepth
