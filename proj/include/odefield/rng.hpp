#pragma once

/// Counter-based random number generation.
///
/// Every random quantity in the library is a pure function of a 64-bit seed
/// and a small tuple of stream indices (trajectory, time index, component,
/// purpose tag).  There is no generator state to advance, so draws are
/// order-independent: noise for observation (i, j) is the same whether the
/// trajectories are generated serially, in parallel, or in reverse.

#include <cmath>
#include <cstdint>

namespace odefield {

/// SplitMix64 finalizer; full-avalanche 64-bit mixing.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

/// Stream tags keep unrelated random streams (noise, samplers, envelope
/// draws, per-repetition seeds) decoupled even under equal indices.
namespace stream {
inline constexpr std::uint64_t noise = 0x6f626e6f697365ULL;
inline constexpr std::uint64_t sampler = 0x73616d706c6572ULL;
inline constexpr std::uint64_t envelope_x = 0x656e765f78ULL;
inline constexpr std::uint64_t envelope_t = 0x656e765f74ULL;
inline constexpr std::uint64_t repetition = 0x7265705f736565ULL;
} // namespace stream

/// Hash a (seed, tag, a, b, c) counter tuple into a uniform 64-bit word.
constexpr std::uint64_t counter_hash(std::uint64_t seed, std::uint64_t tag,
                                     std::uint64_t a = 0, std::uint64_t b = 0,
                                     std::uint64_t c = 0) noexcept {
    std::uint64_t h = mix64(seed ^ 0x243f6a8885a308d3ULL);
    h = mix64(h ^ tag);
    h = mix64(h ^ a);
    h = mix64(h ^ b);
    h = mix64(h ^ c);
    return h;
}

/// Map a 64-bit word to the open interval (0, 1); 53-bit resolution.
constexpr double uniform01(std::uint64_t word) noexcept {
    return (static_cast<double>(word >> 11) + 0.5) * 0x1.0p-53;
}

/// Inverse standard-normal CDF.  Acklam's rational approximation refined by
/// one Halley step of erfc, accurate to within a few ulp over (0, 1).
inline double inverse_normal_cdf(double p) {
    constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                             -2.759285104469687e+02, 1.383577518672690e+02,
                             -3.066479806614716e+01, 2.506628277459239e+00};
    constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                             -1.556989798598866e+02, 6.680131188771972e+01,
                             -1.328068155288572e+01};
    constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                             -2.400758277161838e+00, -2.549732539343734e+00,
                             4.374664141464968e+00,  2.938163982698783e+00};
    constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                             2.445134137142996e+00, 3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    double x;
    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - p_low) {
        const double q = p - 0.5;
        const double r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log(1.0 - p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }

    // Halley refinement against the exact CDF.
    const double err = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
    const double u = err * std::sqrt(2.0 * 3.14159265358979323846) * std::exp(x * x / 2.0);
    return x - u / (1.0 + x * u / 2.0);
}

/// Standard normal draw for a counter tuple.
inline double normal_draw(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0,
                          std::uint64_t b = 0, std::uint64_t c = 0) {
    return inverse_normal_cdf(uniform01(counter_hash(seed, tag, a, b, c)));
}

/// Uniform (0,1) draw for a counter tuple.
constexpr double uniform_draw(std::uint64_t seed, std::uint64_t tag, std::uint64_t a = 0,
                              std::uint64_t b = 0, std::uint64_t c = 0) noexcept {
    return uniform01(counter_hash(seed, tag, a, b, c));
}

/// Derived seed for repetition `rep` of axis cell `cell` under a master seed.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t cell,
                                    std::uint64_t rep) noexcept {
    return counter_hash(master, stream::repetition, cell, rep);
}

} // namespace odefield
