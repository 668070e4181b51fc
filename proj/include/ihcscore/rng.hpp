#pragma once

#include <cstdint>
#include <random>

namespace ihc {

// SplitMix64 finalizer. Used for counter-based seed derivation so that
// parallel streams (bootstrap repeats, per-tile generators) are reproducible
// from one master seed without sharing generator state.
inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Seed for stream `index` derived from `master`. Stable protocol: consumers
/// that need bit-reproducibility (bootstrap oracle, synth tiles) rely on it.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(master ^ splitmix64(index + 1));
}

using Rng = std::mt19937_64;

/// Uniform index in [0, n). Plain modulo reduction, deliberately simple so an
/// independent reimplementation can reproduce the exact draw sequence.
inline std::size_t draw_index(Rng& rng, std::size_t n) {
    return static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n));
}

}  // namespace ihc
