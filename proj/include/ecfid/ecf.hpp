#ifndef ECFID_ECF_HPP
#define ECFID_ECF_HPP

#include <complex>
#include <cstdint>
#include <functional>
#include <span>

#include <Eigen/Core>

#include "ecfid/noise.hpp"
#include "ecfid/system.hpp"

namespace ecfid {

using cxd = std::complex<double>;

/// The M moment-condition vectors u_1..u_M in R^r (rows of `points`).
/// Pairwise distinct and nonzero; over-determination (M > number of free
/// parameters) is checked where the parameter count is known.
struct UGrid {
    int r = 1;
    Eigen::MatrixXd points;  // M x r
    std::uint64_t seed = 0;  // recorded when auto-generated

    int size() const { return static_cast<int>(points.rows()); }
    Eigen::VectorXd point(int k) const { return points.row(k).transpose(); }
    void validate() const;

    static UGrid scalar(std::span<const double> values);
};

/// Find u_max with |phi(u_max)| ~ target_mod (phi decreasing in |u| in the
/// families used here), then build the ladder {+-c 2^j} with M/2 rungs.
UGrid make_scalar_grid(const std::function<cxd(double)>& phi, int m,
                       double target_mod = 0.1);

/// M/2 random vectors with entries uniform on [-u_max, u_max] plus their
/// negations (negation closure keeps the asymptotic covariance real).
UGrid make_block_grid(int r, int m, double u_max, std::uint64_t seed);

// ------------------------------------------------------------------ scores

/// h_n(u, eta) = e^{iu r_n} - phi(u); expectation 0 at the true parameter.
cxd iid_score_known_cf(double sample, double u, const std::function<cxd(double)>& phi);

/// Output-error score e^{iu . real} - e^{iu . sim}; |result| <= 2.
cxd simulated_score(std::span<const double> real_block,
                    std::span<const double> sim_block,
                    std::span<const double> u);

/// Per-sample scores for each u_k plus their averages.
struct ScoreSet {
    Eigen::MatrixXcd values;   // N x M
    Eigen::VectorXcd average;  // M
    long n = 0;
};

/// Column means via pairwise summation (bit-stable, order-fixed).
ScoreSet average_scores(const Eigen::MatrixXcd& values);

/// Pairwise-summed mean of e^{iu x} over a sample, for each u.
Eigen::VectorXcd ecf_scalar(std::span<const double> data,
                            const Eigen::VectorXd& u_values);

/// Pairwise-summed mean of e^{i u_k . block} over blocks, for each grid row.
Eigen::VectorXcd ecf_blocks(const BlockSeries& blocks, const UGrid& grid);

/// Empirical covariance E[(h_k - mean)(conj(h_l - mean))]; Hermitian PSD.
Eigen::MatrixXcd empirical_cov(const ScoreSet& scores);

// ----------------------------------------------------------------- weights

/// Hermitian PSD weighting matrix K with the ridge eps actually applied
/// when it is inverted.
struct WeightMatrix {
    Eigen::MatrixXcd K;
    double eps = 0.0;

    static WeightMatrix identity(int m);
};

/// Default ridge: 1e-10 * trace(K) / M.
double default_reg_eps(const Eigen::MatrixXcd& K);

/// Attach the default ridge to a raw matrix.
WeightMatrix regularized(Eigen::MatrixXcd K);

/// C_{k,l} = phi(u_k - u_l) - phi(u_k) phi(-u_l) for a scalar grid.
WeightMatrix theory_cov_C(const std::function<cxd(double)>& phi, const UGrid& grid);

/// Lambda_{k,l} = phi(u_k - u_l) - phi(u_k) phi(-u_l) for a block grid with
/// joint c.f. evaluator phi: R^r -> C.
WeightMatrix theory_cov_Lambda(const std::function<cxd(const Eigen::VectorXd&)>& joint_phi,
                               const UGrid& grid);

/// Lambda' = 2 Lambda, the simulated-score variant (real and simulated
/// outputs are driven by independent noise sequences).
WeightMatrix doubled(const WeightMatrix& w);

/// V_N = hbar^* (K + eps I)^{-1} hbar; real and >= 0. Rejects K with an
/// eigenvalue below -1e-8 * scale.
double weighted_cost(const Eigen::VectorXcd& hbar, const WeightMatrix& K);
double weighted_cost(const ScoreSet& scores, const WeightMatrix& K);

/// Residual vector s with cost = |s|^2 (stacked real/imag of K^{-1/2} hbar);
/// used by the Gauss-Newton polish.
Eigen::VectorXd whitened_residual(const Eigen::VectorXcd& hbar, const WeightMatrix& K);

// ---------------------------------------------------------------- joint cf

/// Truncated infinite product  prod_k phi_dZ(v_k(theta))  with certified
/// remainder < tol; also reports the truncation point used.
struct JointCfResult {
    cxd value{0.0, 0.0};
    int k_max = 0;
};

JointCfResult joint_cf(const SystemModel& sys, const NoiseModel& noise,
                       const Eigen::VectorXd& u, double tol = 1e-10);

/// The same product truncated at exactly k_max factors (self-consistency
/// checks: doubling k_max must move the value by < tol).
cxd joint_cf_truncated(const SystemModel& sys, const NoiseModel& noise,
                       const Eigen::VectorXd& u, int k_max);

/// Caches the impulse-response data of one system for repeated joint c.f.
/// evaluations (covariance matrices, sensitivity stencils).
class JointCfEvaluator {
public:
    JointCfEvaluator(SystemModel sys, NoiseModel noise, double tol = 1e-10);
    cxd operator()(const Eigen::VectorXd& u) const;

private:
    SystemModel sys_;
    NoiseModel noise_;
    double tol_;
};

// ------------------------------------------------------------ sensitivity

/// Rows -d phi(u_k, .)/d params at `at`, by central differences with
/// per-component step fd_step * max(1, |at_i|) plus a half-step Richardson
/// pass; `richardson_err` reports the disagreement between the two stencils.
struct Sensitivity {
    Eigen::MatrixXcd rows;          // M x p
    Eigen::MatrixXd richardson_err; // M x p
};

Sensitivity sensitivity_matrix(
    const std::function<cxd(const Eigen::VectorXd& u, const Eigen::VectorXd& params)>& phi,
    const UGrid& grid, const Eigen::VectorXd& at, double fd_step = 1e-5);

// ------------------------------------------------------- covariance algebra

/// factor * (H^* Lambda^{-1} H)^{-1} as a real symmetric matrix. Throws
/// IdentifiabilityError when K^{-1/2}H is rank deficient and logic_error when
/// the result has imaginary residue above 1e-8 (grid not negation-closed).
Eigen::MatrixXd asymptotic_cov(const Eigen::MatrixXcd& H, const WeightMatrix& Lambda,
                               double factor);

/// General sandwich factor * T^{-1} H^* K^{-1} Lambda K^{-1} H T^{-1} with
/// T = H^* K^{-1} H; collapses to asymptotic_cov when K = Lambda.
Eigen::MatrixXd sandwich_cov(const Eigen::MatrixXcd& H, const WeightMatrix& K,
                             const WeightMatrix& Lambda, double factor);

} // namespace ecfid

#endif
