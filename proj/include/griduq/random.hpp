#pragma once

#include <cstdint>
#include <random>

namespace griduq {

/// Explicitly seeded stream used for initialization, shuffling and dropout
/// masks. Every consumer takes one by reference; there is no global RNG.
using Rng = std::mt19937_64;

/// Derives an independent stream seed from a base seed and a tag
/// (epoch number, MC pass index, ...). SplitMix64 finalizer.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t tag) {
  std::uint64_t z = base + 0x9E3779B97F4A7C15ULL * (tag + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

}  // namespace griduq
