// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace gup {

/// splitmix64 step; the canonical constants from Steele et al.
inline std::uint64_t splitmix64_next(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// FNV-1a over a string, used to derive independent per-name RNG streams.
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ull;
    }
    return h;
}

/// Small deterministic generator. Streams derived from (seed, name) are
/// independent of each other and of parameter creation order.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    SplitMix64(std::uint64_t seed, std::string_view stream_name)
        : state_(seed ^ (fnv1a64(stream_name) | 1ull)) {
        // Burn a few outputs so nearby seeds decorrelate.
        next_u64();
        next_u64();
    }

    std::uint64_t next_u64() { return splitmix64_next(state_); }

    /// Uniform in [0, 1) with full 53-bit mantissa resolution.
    double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    /// Standard normal via Box-Muller (one value per call; pairs discarded
    /// for simplicity, determinism matters more than throughput here).
    double next_normal() {
        double u1 = next_uniform();
        while (u1 <= 0.0) u1 = next_uniform();
        const double u2 = next_uniform();
        const double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

private:
    std::uint64_t state_;
};

}  // namespace gup
