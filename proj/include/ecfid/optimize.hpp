#ifndef ECFID_OPTIMIZE_HPP
#define ECFID_OPTIMIZE_HPP

#include <cstdint>
#include <functional>
#include <vector>

#include <Eigen/Core>

namespace ecfid {

/// Compact search box; every estimate stays inside [lo, hi].
struct Box {
    Eigen::VectorXd lo, hi;
    int dim() const { return static_cast<int>(lo.size()); }
    void validate() const;
    bool contains(const Eigen::VectorXd& x) const;
    Eigen::VectorXd clamp(const Eigen::VectorXd& x) const;
};

struct OptimOptions {
    int max_iter = 400;        // pattern-search iterations per start
    double step_tol = 1e-10;   // relative pattern step at which to stop
    int multistart = 5;        // total starts (user start + Latin hypercube)
    std::uint64_t seed = 0x5DEECE66DULL; // Latin hypercube seed
    bool polish = true;        // Gauss-Newton polish on the residuals
    int gn_max_iter = 60;
    double fd_step = 1e-6;     // relative step for Jacobian/gradient stencils
};

struct OptimResult {
    Eigen::VectorXd x;
    double cost = 0.0;
    double grad_norm = 0.0;    // finite-difference gradient at the optimum
    long evals = 0;
    int iterations = 0;
    int best_start = 0;
    int n_starts = 1;
    bool converged = false;
    bool boundary_hit = false; // optimum within tolerance of the box edge
    std::vector<double> cost_history; // best cost after each start
};

using CostFn = std::function<double(const Eigen::VectorXd&)>;
/// Optional residual vector s(x) with cost = |s(x)|^2, enabling the
/// Gauss-Newton polish.
using ResidualFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

/// Derivative-free compass/pattern search over the box followed by a
/// finite-difference Gauss-Newton (Levenberg-damped) polish when a residual
/// function is supplied. Deterministic given (start, options). Multistart
/// points come from a fixed-seed Latin hypercube; the best-cost start wins.
OptimResult minimize_cost(const CostFn& cost, const Box& box,
                          const Eigen::VectorXd& start, const OptimOptions& options,
                          const ResidualFn& residual = nullptr);

} // namespace ecfid

#endif
