#pragma once

#include <cstdint>
#include <random>

namespace inpaint {

using Rng = std::mt19937_64;

// splitmix64 finalizer; used to derive independent seeds from structured keys
// (seed, epoch, index, ...) so schedules stay reproducible and order-free.
inline uint64_t mix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t mix64(uint64_t a, uint64_t b) { return mix64(mix64(a) ^ b); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c) { return mix64(mix64(a, b) ^ c); }
inline uint64_t mix64(uint64_t a, uint64_t b, uint64_t c, uint64_t d) {
    return mix64(mix64(a, b, c) ^ d);
}

template <typename T>
T uniform(Rng& rng, double lo, double hi) {
    std::uniform_real_distribution<double> dist(lo, hi);
    return static_cast<T>(dist(rng));
}

template <typename T>
T normal(Rng& rng, double mean = 0.0, double stddev = 1.0) {
    std::normal_distribution<double> dist(mean, stddev);
    return static_cast<T>(dist(rng));
}

inline int64_t uniform_int(Rng& rng, int64_t lo, int64_t hi) {  // inclusive bounds
    std::uniform_int_distribution<int64_t> dist(lo, hi);
    return dist(rng);
}

}  // namespace inpaint
