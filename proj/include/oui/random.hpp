#pragma once

#include <cstdint>
#include <random>

namespace oui {

using Rng = std::mt19937_64;

// splitmix64 finalizer; derives independent sub-seeds from one run seed so
// that init, batch order and probe selection never share a stream.
inline std::uint64_t mix_seed(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
    return mix_seed(mix_seed(seed) ^ mix_seed(stream + 0x632be59bd9b4e019ULL));
}

namespace seed_streams {
inline constexpr std::uint64_t init  = 1;
inline constexpr std::uint64_t batch = 2;
inline constexpr std::uint64_t probe = 3;
inline constexpr std::uint64_t split = 4;
}  // namespace seed_streams

}  // namespace oui
