#pragma once

#include <cstdint>
#include <initializer_list>

namespace homoglab {

/// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Counter-based hash of a key tuple. Each word is absorbed through the mixer,
/// so distinct tuples give statistically independent outputs.
inline std::uint64_t hash_key(std::initializer_list<std::uint64_t> words) {
    std::uint64_t h = 0x243f6a8885a308d3ULL;
    for (std::uint64_t w : words) h = mix64(h ^ mix64(w));
    return h;
}

/// Uniform double in [0, 1) from the top 53 bits.
constexpr double to_unit(std::uint64_t bits) { return static_cast<double>(bits >> 11) * 0x1.0p-53; }

/// Derived seed for sub-stream `index` of `master`.
inline std::uint64_t sub_seed(std::uint64_t master, std::uint64_t index) { return hash_key({master, index, 0x5eedULL}); }

}  // namespace homoglab
