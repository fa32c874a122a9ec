#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cfrl {

using Rng = std::mt19937_64;

/// Derives an independent sub-seed for a named consumer (split, MF init, net init, ...).
/// Stable across platforms: FNV-1a over the label, mixed with the top seed by splitmix64.
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : label) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  std::uint64_t z = seed ^ h;
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view label, std::uint64_t index) {
  return derive_seed(derive_seed(seed, label) + index, "#");
}

}  // namespace cfrl
