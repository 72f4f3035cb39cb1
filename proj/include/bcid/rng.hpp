#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace bcid {

// splitmix64 finalizer, used to mix seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a_bytes(const void* data, std::size_t n,
                                 std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

// All randomness in a run flows from one root seed, forked per module by a
// fixed label (and optional index) so streams never alias across modules.
inline std::mt19937_64 fork_rng(std::uint64_t root_seed, std::string_view label,
                                std::uint64_t index = 0) {
    const std::uint64_t s = mix64(mix64(root_seed ^ fnv1a(label)) + index);
    return std::mt19937_64(s);
}

// Distribution helpers are hand-rolled on top of raw engine output: the std::
// distributions are implementation-defined, which would break byte-identical
// artifacts across standard libraries.

// uniform in [0, 1)
inline double uniform01(std::mt19937_64& g) {
    return static_cast<double>(g() >> 11) * 0x1.0p-53;
}

inline double uniform_range(std::mt19937_64& g, double lo, double hi) {
    return lo + (hi - lo) * uniform01(g);
}

// uniform integer in [lo, hi] inclusive
inline std::uint64_t uniform_index(std::mt19937_64& g, std::uint64_t lo, std::uint64_t hi) {
    const std::uint64_t span = hi - lo + 1;
    return lo + static_cast<std::uint64_t>(uniform01(g) * static_cast<double>(span)) % span;
}

inline bool bernoulli(std::mt19937_64& g, double p) {
    return uniform01(g) < p;
}

inline double exponential(std::mt19937_64& g, double rate) {
    return -std::log1p(-uniform01(g)) / rate;
}

// Box-Muller; the sine half is discarded to keep the draw count fixed.
inline double normal(std::mt19937_64& g, double mean = 0.0, double stddev = 1.0) {
    const double u1 = 1.0 - uniform01(g); // (0, 1]
    const double u2 = uniform01(g);
    const double r = std::sqrt(-2.0 * std::log(u1));
    return mean + stddev * r * std::cos(6.283185307179586476925286766559 * u2);
}

} // namespace bcid
