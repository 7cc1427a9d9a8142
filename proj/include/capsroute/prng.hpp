// Counter-based pseudo-random streams. Every stream is addressed by a
// (seed, name) key plus an element index, so regeneration is order-free and
// bit-identical across platforms.
#pragma once

#include <cstdint>
#include <string_view>

namespace capsroute::rng {

inline constexpr std::uint64_t kGamma = 0x9E3779B97F4A7C15ull;

/// SplitMix64 finalizer.
inline std::uint64_t mix(std::uint64_t z) {
    z += kGamma;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Key for a named stream: FNV-1a over the name folded with the seed.
inline std::uint64_t stream_key(std::uint64_t seed, std::string_view name) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return mix(h ^ mix(seed));
}

/// index-th raw draw from the stream.
inline std::uint64_t draw_u64(std::uint64_t key, std::uint64_t index) {
    return mix(key + index * kGamma);
}

/// Uniform on [0, 1) with 53-bit resolution.
inline double unit_double(std::uint64_t bits) {
    return static_cast<double>(bits >> 11) * 0x1.0p-53;
}

/// Uniform on [-scale, scale).
inline double symmetric_double(std::uint64_t bits, double scale) {
    return scale * (2.0 * unit_double(bits) - 1.0);
}

}  // namespace capsroute::rng
