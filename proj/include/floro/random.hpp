#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

namespace floro {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Counter-based seed derivation: a generator keyed by (seed, counters...)
/// reproduces the same stream regardless of what was drawn before it.
inline Rng keyed_rng(std::initializer_list<std::uint64_t> key) {
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (std::uint64_t k : key) h = mix64(h ^ mix64(k));
  return Rng(h);
}

// Domain tags for keyed_rng so that different consumers never share a stream.
enum class RngDomain : std::uint64_t {
  kMask = 1,
  kAugment = 2,
  kDrop = 3,
  kShuffle = 4,
  kInit = 5,
  kSynth = 6,
  kSplit = 7,
  kProbe = 8,
};

inline std::uint64_t tag(RngDomain d) { return static_cast<std::uint64_t>(d); }

}  // namespace floro
