// Copyright 2026 The emshep Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>

namespace emshep {

// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Derives an independent stream seed from a master seed and a tag path, so
// per-sample generators do not depend on evaluation order.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return mix64(mix64(mix64(master) ^ a) + b);
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(master, a, b));
}

// Stream tags.  Keep stable: changing one changes every artifact.
namespace stream {
inline constexpr std::uint64_t kDataset = 0x44415441;    // "DATA"
inline constexpr std::uint64_t kPattern = 0x50415454;    // "PATT"
inline constexpr std::uint64_t kVictim = 0x56494354;     // "VICT"
inline constexpr std::uint64_t kAttack = 0x41545443;     // "ATTC"
inline constexpr std::uint64_t kLeak = 0x4c45414b;       // "LEAK"
inline constexpr std::uint64_t kClassifier = 0x45434c46; // "ECLF"
inline constexpr std::uint64_t kVae = 0x56414545;        // "VAEE"
inline constexpr std::uint64_t kHoldout = 0x484f4c44;    // "HOLD"
}  // namespace stream

}  // namespace emshep
