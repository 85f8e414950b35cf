#include "ecfid/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace ecfid {

namespace {
constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

inline std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += kGolden);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

std::uint64_t seed_split(std::uint64_t master, std::uint64_t index) {
    std::uint64_t state = master + kGolden * (index + 1);
    return splitmix64(state);
}

Rng::Rng(std::uint64_t seed) {
    // Seed the full state from splitmix64, the recommended seeding for xoshiro.
    std::uint64_t sm = seed;
    for (auto& w : s_) w = splitmix64(sm);
}

std::uint64_t Rng::next_u64() {
    const std::uint64_t result = rotl(s_[1] * 5, 7) * 9;
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
}

double Rng::uniform01() {
    // 53-bit mantissa, offset by half an ulp so the value lies in (0,1).
    return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double Rng::uniform(double a, double b) {
    return a + (b - a) * uniform01();
}

double Rng::normal() {
    const double u1 = uniform01();
    const double u2 = uniform01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

double Rng::exponential() {
    return -std::log(uniform01());
}

double Rng::gamma(double shape, double scale) {
    if (!(shape > 0.0) || !(scale > 0.0))
        throw std::invalid_argument("Rng::gamma: shape and scale must be positive");
    if (shape < 1.0) {
        // Boost: G(a) = G(a+1) * U^{1/a}
        const double u = uniform01();
        return gamma(shape + 1.0, scale) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
        double x, v;
        do {
            x = normal();
            v = 1.0 + c * x;
        } while (v <= 0.0);
        v = v * v * v;
        const double u = uniform01();
        if (u < 1.0 - 0.0331 * x * x * x * x) return scale * d * v;
        if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return scale * d * v;
    }
}

long Rng::poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean))
        throw std::invalid_argument("Rng::poisson: mean must be finite and non-negative");
    if (mean == 0.0) return 0;
    // Keep exp(-mean) representable; larger means split into exact parts.
    if (mean > 500.0) {
        const long parts = static_cast<long>(std::ceil(mean / 500.0));
        long total = 0;
        for (long i = 0; i < parts; ++i) total += poisson(mean / static_cast<double>(parts));
        return total;
    }
    const double u = uniform01();
    double p = std::exp(-mean);
    double cdf = p;
    long k = 0;
    while (u > cdf) {
        ++k;
        p *= mean / static_cast<double>(k);
        cdf += p;
        if (k > 100000) break; // unreachable for mean <= 500; guards FP stall
    }
    return k;
}

Rng sample_rng(std::uint64_t seed, std::uint64_t index) {
    return Rng(seed_split(seed, index));
}

} // namespace ecfid
