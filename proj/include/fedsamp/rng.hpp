#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace fedsamp {

using Rng = std::mt19937_64;

/// Named sub-stream tags. Every random draw in a simulation flows from one
/// master seed through (tag, indices...) so that runs are reproducible and
/// per-client work is order-independent.
enum class Stream : std::uint64_t {
  kData = 1,
  kPartition,
  kProfile,
  kHoldout,
  kSampling,
  kLocalSgd,
  kProbe,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Hash-chains a master seed with a stream tag and integer path, giving
/// statistically independent sub-seeds for concurrent tasks.
inline std::uint64_t derive_seed(std::uint64_t master, Stream tag,
                                 std::initializer_list<std::uint64_t> path = {}) {
  std::uint64_t h = splitmix64(master ^ static_cast<std::uint64_t>(tag));
  for (std::uint64_t v : path) h = splitmix64(h ^ v);
  return h;
}

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

}  // namespace fedsamp
