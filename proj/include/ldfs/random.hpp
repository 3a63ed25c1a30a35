#pragma once

#include <cstdint>
#include <random>

#include "ldfs/linalg.hpp"

namespace ldfs {

using Rng = std::mt19937_64;

/// Seed for an independent stream `stream` under a run seed (splitmix64).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) { return Rng(derive_seed(seed, stream)); }

/// d independent N(0, 1) draws.
Vector standard_normal(Rng& rng, std::size_t d);

/// Uniform integer in [0, n).
std::size_t uniform_index(Rng& rng, std::size_t n);

// Named streams so that switching a feature on or off never shifts the
// draws seen by another feature.
namespace streams {
inline constexpr std::uint64_t kShuffle = 1;
inline constexpr std::uint64_t kAttribute = 2;
inline constexpr std::uint64_t kNoise = 3;
inline constexpr std::uint64_t kInit = 4;
inline constexpr std::uint64_t kSplit = 5;
inline constexpr std::uint64_t kProbe = 6;
inline constexpr std::uint64_t kGap = 7;
inline constexpr std::uint64_t kFixture = 8;
}  // namespace streams

}  // namespace ldfs
