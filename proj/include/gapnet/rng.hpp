#pragma once

#include <cstdint>
#include <random>

namespace gapnet {

// splitmix64 finalizer; decorrelates derived seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Deterministic sub-stream seed for (purpose, index) pairs, so per-cloud and
// per-epoch generators are reproducible regardless of execution order.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t a, std::uint64_t b = 0) {
    return mix64(base ^ mix64(a ^ mix64(b)));
}

inline std::mt19937 make_rng(std::uint64_t seed) {
    return std::mt19937(static_cast<std::mt19937::result_type>(seed ^ (seed >> 32)));
}

}  // namespace gapnet
