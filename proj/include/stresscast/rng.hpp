#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace stresscast {

// All randomness flows through a seeded mt19937_64. Draw order is pinned by
// the helpers below rather than std distributions, whose sequences are
// implementation-defined.
using Rng = std::mt19937_64;

// Uniform double in (0, 1); never returns 0 or 1.
inline double uniform01(Rng& g) {
    // 53-bit mantissa, shifted into the open interval.
    return (static_cast<double>(g() >> 11) + 0.5) * (1.0 / 9007199254740992.0);
}

// Uniform integer in [0, n). Rejection-sampled to avoid modulo bias.
inline std::uint64_t uniform_below(Rng& g, std::uint64_t n) {
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t v;
    do {
        v = g();
    } while (v >= limit);
    return v % n;
}

// Standard normal via Box-Muller, two uniforms per draw (no spare caching,
// so the stream position is a pure function of the draw count).
inline double normal(Rng& g) {
    const double u1 = uniform01(g);
    const double u2 = uniform01(g);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
}

// Standard Gumbel(0,1).
inline double gumbel(Rng& g) { return -std::log(-std::log(uniform01(g))); }

// Fisher-Yates with explicit bounded draws.
template <typename T>
void shuffle(std::vector<T>& v, Rng& g) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(uniform_below(g, i));
        std::swap(v[i - 1], v[j]);
    }
}

// Derives an independent stream from a base seed (e.g. noise draws that must
// not perturb the batch-shuffle stream).
inline Rng derive_stream(std::uint64_t seed, std::uint64_t stream) {
    return Rng(seed * 0x9E3779B97F4A7C15ull + stream + 1);
}

}  // namespace stresscast
