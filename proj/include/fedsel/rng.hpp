#pragma once

#include <cstdint>
#include <random>

namespace fedsel {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent stream seeds from structured keys
// (experiment seed, round, client) so results never depend on thread schedule.
constexpr std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a,
                                    std::uint64_t b = 0) {
  return mix_seed(mix_seed(mix_seed(base) ^ a) ^ b);
}

// Stream tags for derive_seed.
enum class Stream : std::uint64_t {
  kInit = 1,
  kData = 2,
  kEval = 3,
  kPartition = 4,
  kLocal = 5,
  kSelection = 6,
  kBandit = 7,
};

inline Rng make_rng(std::uint64_t base, Stream s, std::uint64_t sub = 0) {
  return Rng(derive_seed(base, static_cast<std::uint64_t>(s), sub));
}

}  // namespace fedsel
