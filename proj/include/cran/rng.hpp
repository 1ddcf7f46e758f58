#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace cran {

// Deterministic fan-out of one master seed into independent named
// streams. Stream identity is (name, up to three integer coordinates),
// e.g. ("noise", station, channel, epoch). Same inputs always yield the
// same generator state; different coordinates decorrelate via
// splitmix64 avalanching.
namespace rng {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t hash_name(std::string_view name) {
    // FNV-1a 64
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : name) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t master, std::string_view name,
                                 std::uint64_t a = 0, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t s = splitmix64(master ^ hash_name(name));
    s = splitmix64(s ^ (a + 0x243f6a8885a308d3ULL));
    s = splitmix64(s ^ (b + 0x13198a2e03707344ULL));
    s = splitmix64(s ^ (c + 0xa4093822299f31d0ULL));
    return s;
}

inline std::mt19937_64 stream(std::uint64_t master, std::string_view name,
                              std::uint64_t a = 0, std::uint64_t b = 0,
                              std::uint64_t c = 0) {
    return std::mt19937_64(derive_seed(master, name, a, b, c));
}

}  // namespace rng
}  // namespace cran
