// SPDX-License-Identifier: MIT
//
// Counter-based random numbers: every draw is a pure function of
// (seed, purpose, particle, step, component). No global state, no
// sequential generator objects; any draw can be reproduced in isolation,
// which is what makes parallel simulation bit-reproducible.
#pragma once

#include <cmath>
#include <cstdint>

namespace mfg::rng {

enum class Purpose : std::uint64_t {
    Init = 1,
    IndivNoise = 2,
    CommonNoise = 3,
    ActionA = 4,
    ActionB = 5,
    Probe = 6,
    Bench = 7,
};

// SplitMix64 finalizer; full avalanche on 64 bits.
inline constexpr std::uint64_t mix(std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ull;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

inline constexpr std::uint64_t substream(std::uint64_t seed, Purpose purpose,
                                         std::uint64_t a, std::uint64_t b,
                                         std::uint64_t c) {
    std::uint64_t h = mix(seed);
    h = mix(h ^ static_cast<std::uint64_t>(purpose));
    h = mix(h ^ a);
    h = mix(h ^ b);
    h = mix(h ^ c);
    return h;
}

// Uniform in (0, 1); never returns exactly 0 or 1 so it is safe to feed
// into the normal quantile.
inline double uniform(std::uint64_t seed, Purpose purpose, std::uint64_t a,
                      std::uint64_t b, std::uint64_t c) {
    std::uint64_t h = substream(seed, purpose, a, b, c);
    double u = (static_cast<double>(h >> 11) + 0.5) * 0x1.0p-53;
    return u;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

inline double normal_pdf(double x) {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * 3.14159265358979323846);
}

// Standard normal quantile: rational tail initial guess refined by Newton
// on erfc inside a maintained bracket, so the iteration cannot escape and
// converges to full double precision everywhere.
inline double normal_quantile(double p) {
    if (p <= 0.0) return -HUGE_VAL;
    if (p >= 1.0) return HUGE_VAL;
    bool flip = p > 0.5;
    double q = flip ? 1.0 - p : p;  // q in (0, 0.5]
    double t = std::sqrt(-2.0 * std::log(q));
    double x = -(t - (2.515517 + t * (0.802853 + t * 0.010328)) /
                         (1.0 + t * (1.432788 + t * (0.189269 + t * 0.001308))));
    double lo = x - 1e-2, hi = x + 1e-2;  // guess is good to ~4.5e-4
    while (normal_cdf(lo) > q) lo -= 0.5;
    while (normal_cdf(hi) < q) hi += 0.5;
    for (int it = 0; it < 60; ++it) {
        double f = normal_cdf(x) - q;
        if (f > 0.0) hi = x;
        else lo = x;
        double d = normal_pdf(x);
        double nx = d > 0.0 ? x - f / d : 0.5 * (lo + hi);
        if (!(nx > lo && nx < hi)) nx = 0.5 * (lo + hi);
        if (std::abs(nx - x) < 1e-16 * (1.0 + std::abs(x))) {
            x = nx;
            break;
        }
        x = nx;
    }
    return flip ? -x : x;
}

inline double gaussian(std::uint64_t seed, Purpose purpose, std::uint64_t a,
                       std::uint64_t b, std::uint64_t c) {
    return normal_quantile(uniform(seed, purpose, a, b, c));
}

}  // namespace mfg::rng
