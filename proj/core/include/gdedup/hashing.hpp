#pragma once

#include <cstdint>
#include <string_view>

#include "gdedup/rng.hpp"

namespace gdedup {

// FNV-1a over bytes, finalized with mix64 for avalanche. Stable across
// platforms, unlike std::hash.
inline std::uint64_t hash64(std::string_view bytes, std::uint64_t seed = 0) {
  std::uint64_t h = 1469598103934665603ull ^ mix64(seed);
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return mix64(h);
}

inline std::uint64_t hash64(std::uint64_t value, std::uint64_t seed = 0) {
  return mix64(value ^ mix64(seed));
}

}  // namespace gdedup
