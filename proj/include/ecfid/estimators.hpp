#ifndef ECFID_ESTIMATORS_HPP
#define ECFID_ESTIMATORS_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ecfid/ecf.hpp"
#include "ecfid/noise.hpp"
#include "ecfid/optimize.hpp"
#include "ecfid/system.hpp"

namespace ecfid {

enum class WeightingKind {
    IdentityOnly, ///< single stage, K = I
    TwoStage,     ///< stage 1 with K = I, stage 2 with the estimated optimal K
    Fixed         ///< single stage with a caller-supplied K
};

struct Weighting {
    WeightingKind kind = WeightingKind::TwoStage;
    WeightMatrix fixed; // used when kind == Fixed
};

struct EstimationResult {
    Eigen::VectorXd estimate;
    double cost = 0.0;
    WeightMatrix weight;      // weighting used at the final stage
    Eigen::MatrixXd cov;      // asymptotic covariance of sqrt(N)(estimate - truth)
    int cov_factor = 1;       // 1 (known c.f.), 2 (simulated scores), 0 (none/joint)
    long n_data = 0;
    long n_sim = 0;
    OptimResult opt;
    std::vector<std::uint64_t> seeds; // seeds consumed (simulation side)
    int stages = 1;
};

/// i.i.d. ECF with a closed-form c.f. phi(u, eta). Two-stage weighting uses
/// K = C(eta_stage1); reported covariance is (G* C^{-1} G)^{-1} (factor 1).
struct IidKnownCfProblem {
    std::vector<double> data;
    std::function<cxd(double, const Eigen::VectorXd&)> phi;
    UGrid grid;               // r must be 1
    Box domain;
    Eigen::VectorXd start;
    Weighting weighting;
    OptimOptions opt;
    double fd_step = 1e-5;
};

EstimationResult estimate_iid_known_cf(const IidKnownCfProblem& problem);

/// i.i.d. ECF with simulated scores: xi_n(eta) = F(rho_n, eta) with common
/// random numbers (one rho realization reused across every eta evaluated).
/// Two-stage weighting requires n_sim == N (per-sample score pairing);
/// reported covariance carries factor 2.
struct IidSimulatedProblem {
    std::vector<double> data;
    std::function<double(double, const Eigen::VectorXd&)> mechanism; // F(rho, eta)
    std::function<std::vector<double>(long, std::uint64_t)> rho_sampler;
    long n_sim = 0;
    std::uint64_t sim_seed = 1;
    UGrid grid;               // r must be 1
    Box domain;
    Eigen::VectorXd start;
    Weighting weighting;
    OptimOptions opt;
    double fd_step = 1e-5;
};

EstimationResult estimate_iid_simulated(const IidSimulatedProblem& problem);

/// Output-error ECF estimator of the system dynamics with known noise
/// parameters. Observed series has length N + r; the simulated comparison
/// series uses an independent noise realization (fixed seed across all theta
/// for a smooth cost surface). Stage-2 weighting K = Lambda'(theta_stage1)
/// = 2 Lambda; covariance 2 (H* Lambda^{-1} H)^{-1}.
struct DynamicsProblem {
    std::vector<double> data;       // observed delta-y, length N + r
    SystemSpec structure;           // full theta template
    std::vector<int> free_theta;    // indices of structure.theta being estimated
    NoiseModel noise;               // known eta*, samplable family
    UGrid grid;                     // block grid; r = grid.r
    long n_sim = 0;                 // simulated series length (defaults to N if 0... rejected; set explicitly)
    std::uint64_t sim_seed = 1;
    Box domain;                     // box for the free theta components
    Eigen::VectorXd start;
    Weighting weighting;
    OptimOptions opt;
    double joint_cf_tol = 1e-10;
    double fd_step = 1e-5;
    double stability_margin = 1e-6;

    DynamicsProblem(NoiseModel n) : noise(std::move(n)) {}
};

EstimationResult estimate_dynamics(const DynamicsProblem& problem);

/// Evaluate the dynamics output-error cost at a single theta with K = I
/// (used for cost-gap diagnostics without running the optimizer).
double dynamics_cost_at(const DynamicsProblem& problem, const Eigen::VectorXd& theta_free);

/// Joint (theta, eta) estimation; minimizes the same cost over the product
/// box (theta components first). Experimental: no asymptotic covariance is
/// reported (cov_factor = 0). With free_eta empty it reproduces the
/// estimate_dynamics cost surface exactly for the same seeds.
struct JointProblem {
    std::vector<double> data;
    SystemSpec structure;
    std::vector<int> free_theta;
    NoiseModel noise;               // template carrying eta start values
    std::vector<int> free_eta;
    UGrid grid;
    long n_sim = 0;
    std::uint64_t sim_seed = 1;
    Box domain;                     // theta box then eta box
    Eigen::VectorXd start;
    Weighting weighting{WeightingKind::IdentityOnly, {}};
    OptimOptions opt;
    double stability_margin = 1e-6;

    JointProblem(NoiseModel n) : noise(std::move(n)) {}
};

EstimationResult estimate_joint(const JointProblem& problem);

/// Cost of the joint problem at a fixed (theta_free, eta_free) point, K = I.
double joint_cost_at(const JointProblem& problem, const Eigen::VectorXd& params);

/// Per-sample scores h_{k,n} paired between observed and simulated series;
/// rows n, columns k. Both inputs must have equal length/count.
Eigen::MatrixXcd paired_scores_scalar(std::span<const double> observed,
                                      std::span<const double> simulated,
                                      const UGrid& grid);
Eigen::MatrixXcd paired_scores_blocks(const BlockSeries& observed,
                                      const BlockSeries& simulated,
                                      const UGrid& grid);

} // namespace ecfid

#endif
