// Counter-based seed splitting so that parallel work units draw from
// independent, reproducible streams regardless of the thread count.
#pragma once

#include "pes/types.hpp"

#include <cstdint>
#include <random>

namespace pes {

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives a child seed from a base seed and up to three stream indices.
inline std::uint64_t split_seed(std::uint64_t seed, std::uint64_t a,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t s = splitmix64(seed ^ 0x517cc1b727220a95ULL);
  s = splitmix64(s ^ a);
  s = splitmix64(s ^ b);
  return splitmix64(s ^ c);
}

inline Rng make_rng(std::uint64_t seed) { return Rng(splitmix64(seed)); }

// Stream tags keep the per-purpose sub-streams of a run disjoint.
enum class StreamTag : std::uint64_t {
  HyperChain = 1,
  SlotBasis = 2,
  SlotWeights = 3,
  SlotOptimize = 4,
  AcqOptimize = 5,
  Init = 6,
  QueryNoise = 7,
  Recommend = 8,
  Objective = 9,
  OracleSample = 10,
  Bootstrap = 11,
};

inline std::uint64_t split_seed(std::uint64_t seed, StreamTag tag,
                                std::uint64_t b = 0, std::uint64_t c = 0) {
  return split_seed(seed, static_cast<std::uint64_t>(tag), b, c);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double normal01(Rng& rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

inline Vec normal_vector(int n, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Vec v(n);
  for (int i = 0; i < n; ++i) v(i) = dist(rng);
  return v;
}

// Latin hypercube sample of `count` points in `domain`.
inline std::vector<Vec> latin_hypercube(const Domain& domain, int count, Rng& rng) {
  const int d = domain.dim();
  std::vector<Vec> points(count, Vec(d));
  std::vector<int> perm(count);
  for (int j = 0; j < d; ++j) {
    for (int i = 0; i < count; ++i) perm[i] = i;
    std::shuffle(perm.begin(), perm.end(), rng);
    for (int i = 0; i < count; ++i) {
      const double u = (perm[i] + uniform01(rng)) / count;
      points[i](j) = domain.lower(j) + u * (domain.upper(j) - domain.lower(j));
    }
  }
  return points;
}

}  // namespace pes
