#ifndef ECFID_HARNESS_HPP
#define ECFID_HARNESS_HPP

#include <optional>
#include <string>

#include "ecfid/config.hpp"

namespace ecfid {

/// Simulate a series from {"noise": ..., "system": ... (optional), "n": ...,
/// "seed": ...} and write a single-column CSV with provenance header.
/// Returns metadata (path, config hash, seed).
json run_simulate(const json& cfg, const std::string& out_path);

/// Run one estimation described by cfg ("estimator" plus problem fields) on
/// the series in data_path; writes and returns the result file content.
json run_estimate(const json& cfg, const std::string& data_path,
                  const std::string& out_path);

/// Replicated study: per-replication data generation + estimation with the
/// documented seed schedule; per-rep CSV plus a summary JSON comparing the
/// sqrt(N)-scaled sample covariance against the asymptotic formula.
/// kind "factor2" runs the known-c.f. and simulated-score estimators on the
/// same data and reports their variance ratio.
json run_montecarlo(const json& cfg, const std::string& out_dir, int jobs);

/// Verify a score-covariance formula (target "iid_C" or "blocks_lambda")
/// against its Monte Carlo estimate at the configured budget.
json run_covcheck(const json& cfg, const std::string& out_path);

/// Re-run the spec embedded in an output file and compare bit-exactly.
/// Returns true when identical; `detail` explains any mismatch.
bool replay(const std::string& path, int jobs, std::string* detail);

// ---- pieces shared with tests ----

/// Deterministic per-replication seed fan-out (seed_split schedule):
/// stream 0 = data, 1 = simulation, 2 = optimizer.
struct RepSeeds {
    std::uint64_t data;
    std::uint64_t sim;
    std::uint64_t opt;
};
RepSeeds replication_seeds(std::uint64_t master, std::uint64_t rep);

/// The named i.i.d. families available to the CLI estimators: a Levy
/// increment model ("noise_increments") or the location-shift family
/// ("gauss_shift": xi = eta + sigma0 * rho, rho standard normal).
struct IidFamily {
    std::string kind;
    std::optional<NoiseModel> model; // noise_increments
    std::vector<int> free_indices;   // into the packed eta vector
    double shift_eta = 0.0;          // gauss_shift location (the truth)
    double shift_sigma0 = 1.0;       // gauss_shift

    int free_count() const;
    Eigen::VectorXd truth() const;   // free components at the configured values
    std::function<cxd(double, const Eigen::VectorXd&)> phi() const;
    std::vector<double> sample(long n, std::uint64_t seed,
                               const Eigen::VectorXd& free_values) const;
    // mechanism form (gauss_shift only): xi = F(rho, eta)
    std::function<double(double, const Eigen::VectorXd&)> mechanism() const;
    std::function<std::vector<double>(long, std::uint64_t)> rho_sampler() const;
};

IidFamily iid_family_from_json(const json& cfg);

/// Resolve a grid config: explicit {"points": ...} or automatic
/// {"auto": {"m": ..., "target_mod": ...}} scaled from the supplied c.f.
UGrid resolve_scalar_grid(const json& cfg, const std::function<cxd(double)>& phi);
UGrid resolve_block_grid(const json& cfg, const std::function<cxd(double)>& marginal_phi);

} // namespace ecfid

#endif
