#ifndef ECFID_RNG_HPP
#define ECFID_RNG_HPP

#include <cstdint>

namespace ecfid {

/// One step of the splitmix64 sequence; advances `state` and returns the output.
std::uint64_t splitmix64(std::uint64_t& state);

/// Deterministic seed schedule: seed_i = split(master, i).
/// Used everywhere a master seed fans out into per-replication or
/// per-stream seeds, so any run is reproducible from (master, index).
std::uint64_t seed_split(std::uint64_t master, std::uint64_t index);

/// xoshiro256** generator with the sampling distributions used by the
/// noise samplers. Self-contained so that sequences are reproducible
/// across standard-library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform on the open interval (0,1); never returns 0 or 1.
    double uniform01();
    double uniform(double a, double b);

    /// Standard normal via Box-Muller (two uniforms per call).
    double normal();

    /// Exponential with mean 1.
    double exponential();

    /// Gamma(shape, scale) via Marsaglia-Tsang; shape < 1 handled by boosting.
    double gamma(double shape, double scale);

    /// Poisson(mean) by CDF inversion; large means split into exact
    /// independent summands to avoid underflow of exp(-mean).
    long poisson(double mean);

private:
    std::uint64_t s_[4];
};

/// Independent per-sample engine: stream `index` under `seed`.
/// Sample i of a sequence always sees the same engine regardless of how
/// many draws other samples consume, which keeps common-random-number
/// cost surfaces aligned when distribution parameters move.
Rng sample_rng(std::uint64_t seed, std::uint64_t index);

} // namespace ecfid

#endif
