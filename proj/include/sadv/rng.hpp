#pragma once

#include <cstdint>
#include <random>

#include "sadv/tensor.hpp"

namespace sadv {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9E3779B97F4A7C15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Derives an independent stream seed from a base seed and a stream tag, so
/// that consumers (shuffling, attack init, parameter init) never share draws.
inline std::uint64_t mix_seed(std::uint64_t base, std::uint64_t tag) {
    std::uint64_t s = base + 0x9E3779B97F4A7C15ull * (tag + 1);
    return splitmix64(s);
}

inline void uniform_fill(Tensor& t, double lo, double hi, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(lo, hi);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = d(rng);
}

}  // namespace sadv
