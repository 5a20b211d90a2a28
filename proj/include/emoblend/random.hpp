#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <string_view>

namespace emoblend {

using Rng = std::mt19937_64;

/// FNV-1a, stable across platforms (std::hash is not).
constexpr std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive a child seed from a base seed and a list of string keys.
inline std::uint64_t derive_seed(std::uint64_t base, std::initializer_list<std::string_view> keys) {
    std::uint64_t h = splitmix64(base);
    for (auto k : keys) h = splitmix64(h ^ fnv1a(k));
    return h;
}

inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return splitmix64(splitmix64(base) ^ splitmix64(index + 0x632be59bd9b4e019ULL));
}

}  // namespace emoblend
