#include "ecfid/optimize.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Dense>

#include "ecfid/errors.hpp"
#include "ecfid/rng.hpp"

namespace ecfid {

void Box::validate() const {
    if (lo.size() != hi.size() || lo.size() < 1)
        throw ConfigError("Box: lo/hi must have equal positive dimension");
    for (int i = 0; i < lo.size(); ++i) {
        if (!(lo[i] < hi[i]))
            throw ConfigError("Box: need lo < hi in every coordinate");
        if (!std::isfinite(lo[i]) || !std::isfinite(hi[i]))
            throw ConfigError("Box: bounds must be finite");
    }
}

bool Box::contains(const Eigen::VectorXd& x) const {
    if (x.size() != lo.size()) return false;
    for (int i = 0; i < x.size(); ++i)
        if (x[i] < lo[i] || x[i] > hi[i]) return false;
    return true;
}

Eigen::VectorXd Box::clamp(const Eigen::VectorXd& x) const {
    return x.cwiseMax(lo).cwiseMin(hi);
}

namespace {

struct Tracker {
    const CostFn& cost;
    long evals = 0;
    double operator()(const Eigen::VectorXd& x) {
        ++evals;
        const double c = cost(x);
        if (std::isnan(c)) throw NonConvergenceError("cost returned NaN");
        return c;
    }
};

struct LocalResult {
    Eigen::VectorXd x;
    double cost;
    int iterations;
    bool step_converged;
};

LocalResult pattern_search(Tracker& f, const Box& box, Eigen::VectorXd x,
                           const OptimOptions& opt) {
    const int p = box.dim();
    const Eigen::VectorXd scale = box.hi - box.lo;
    double step = 0.25;
    double fx = f(x);
    int it = 0;
    for (; it < opt.max_iter; ++it) {
        bool improved = false;
        Eigen::VectorXd best_x = x;
        double best_f = fx;
        for (int i = 0; i < p; ++i) {
            for (double sgn : {+1.0, -1.0}) {
                Eigen::VectorXd y = x;
                y[i] = std::clamp(x[i] + sgn * step * scale[i], box.lo[i], box.hi[i]);
                if (y[i] == x[i]) continue;
                const double fy = f(y);
                if (fy < best_f) {
                    best_f = fy;
                    best_x = y;
                    improved = true;
                }
            }
        }
        if (improved) {
            x = best_x;
            fx = best_f;
            step = std::min(1.0, 2.0 * step);
        } else {
            step *= 0.5;
            if (step < opt.step_tol) return {x, fx, it + 1, true};
        }
    }
    return {x, fx, it, step < 1e-6};
}

// Levenberg-damped Gauss-Newton on stacked residuals, projected to the box.
LocalResult gauss_newton(Tracker& f, const ResidualFn& residual, const Box& box,
                         Eigen::VectorXd x, double fx, const OptimOptions& opt) {
    const int p = box.dim();
    double mu = 1e-3;
    int it = 0;
    bool small_step = false;
    for (; it < opt.gn_max_iter; ++it) {
        const Eigen::VectorXd r0 = residual(x);
        const long m = r0.size();
        Eigen::MatrixXd jac(m, p);
        for (int i = 0; i < p; ++i) {
            const double hh = opt.fd_step * std::max(1.0, std::abs(x[i]));
            Eigen::VectorXd xp = x, xm = x;
            xp[i] = std::min(x[i] + hh, box.hi[i]);
            xm[i] = std::max(x[i] - hh, box.lo[i]);
            const double denom = xp[i] - xm[i];
            if (denom == 0.0) { jac.col(i).setZero(); continue; }
            jac.col(i) = (residual(xp) - residual(xm)) / denom;
            f.evals += 2;
        }
        const Eigen::MatrixXd jtj = jac.transpose() * jac;
        const Eigen::VectorXd jtr = jac.transpose() * r0;
        if (jtr.norm() < 1e-14 * (1.0 + fx)) { small_step = true; break; }
        bool accepted = false;
        for (int tries = 0; tries < 12; ++tries) {
            Eigen::MatrixXd damped = jtj;
            damped.diagonal() += mu * jtj.diagonal().cwiseMax(1e-12);
            const Eigen::VectorXd delta = damped.ldlt().solve(-jtr);
            const Eigen::VectorXd y = box.clamp(x + delta);
            const double fy = f(y);
            if (fy < fx) {
                if ((y - x).norm() < 1e-13 * (1.0 + x.norm())) small_step = true;
                x = y;
                fx = fy;
                mu = std::max(mu * 0.3, 1e-12);
                accepted = true;
                break;
            }
            mu *= 10.0;
        }
        if (!accepted || small_step) break;
    }
    return {x, fx, it, small_step};
}

double fd_grad_norm(Tracker& f, const Box& box, const Eigen::VectorXd& x,
                    double fd_step) {
    // one-sided toward the interior at the box edge
    double norm2 = 0.0;
    for (int i = 0; i < x.size(); ++i) {
        const double hh = fd_step * std::max(1.0, std::abs(x[i]));
        const double up = std::min(x[i] + hh, box.hi[i]);
        const double dn = std::max(x[i] - hh, box.lo[i]);
        if (up == dn) continue;
        Eigen::VectorXd xp = x, xm = x;
        xp[i] = up;
        xm[i] = dn;
        const double g = (f(xp) - f(xm)) / (up - dn);
        norm2 += g * g;
    }
    return std::sqrt(norm2);
}

} // namespace

OptimResult minimize_cost(const CostFn& cost, const Box& box,
                          const Eigen::VectorXd& start, const OptimOptions& options,
                          const ResidualFn& residual) {
    box.validate();
    if (start.size() != box.lo.size())
        throw ConfigError("minimize_cost: start dimension does not match box");
    if (!box.contains(start))
        throw ConfigError("minimize_cost: start must lie inside the box");
    if (options.multistart < 1)
        throw ConfigError("minimize_cost: multistart must be >= 1");

    const int p = box.dim();
    Tracker f{cost};

    // fixed-seed Latin hypercube for the extra starts
    std::vector<Eigen::VectorXd> starts{start};
    if (options.multistart > 1) {
        const int extra = options.multistart - 1;
        Rng rng(options.seed);
        std::vector<std::vector<int>> perms(static_cast<std::size_t>(p));
        for (int i = 0; i < p; ++i) {
            std::vector<int> perm(static_cast<std::size_t>(extra));
            for (int j = 0; j < extra; ++j) perm[static_cast<std::size_t>(j)] = j;
            for (int j = extra - 1; j > 0; --j) {
                const int k = static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(j + 1));
                std::swap(perm[static_cast<std::size_t>(j)], perm[static_cast<std::size_t>(k)]);
            }
            perms[static_cast<std::size_t>(i)] = perm;
        }
        for (int j = 0; j < extra; ++j) {
            Eigen::VectorXd x(p);
            for (int i = 0; i < p; ++i) {
                const double stratum = perms[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
                const double frac = (stratum + rng.uniform01()) / extra;
                x[i] = box.lo[i] + frac * (box.hi[i] - box.lo[i]);
            }
            starts.push_back(x);
        }
    }

    OptimResult out;
    out.n_starts = static_cast<int>(starts.size());
    double best = std::numeric_limits<double>::infinity();
    int total_iters = 0;
    bool any_converged = false;
    for (std::size_t s = 0; s < starts.size(); ++s) {
        LocalResult loc = pattern_search(f, box, starts[s], options);
        if (options.polish && residual) {
            LocalResult pol = gauss_newton(f, residual, box, loc.x, loc.cost, options);
            pol.iterations += loc.iterations;
            pol.step_converged = pol.step_converged || loc.step_converged;
            loc = pol;
        }
        total_iters += loc.iterations;
        any_converged = any_converged || loc.step_converged;
        out.cost_history.push_back(loc.cost);
        if (loc.cost < best) {
            best = loc.cost;
            out.x = loc.x;
            out.cost = loc.cost;
            out.best_start = static_cast<int>(s);
        }
    }
    out.iterations = total_iters;
    out.grad_norm = fd_grad_norm(f, box, out.x, options.fd_step);
    out.evals = f.evals;
    out.converged = any_converged;
    for (int i = 0; i < p; ++i) {
        const double span = box.hi[i] - box.lo[i];
        if (out.x[i] - box.lo[i] < 1e-6 * span || box.hi[i] - out.x[i] < 1e-6 * span)
            out.boundary_hit = true;
    }
    if (!out.converged) {
        std::string msg = "minimize_cost: no start converged; best costs:";
        for (double c : out.cost_history) msg += " " + std::to_string(c);
        throw NonConvergenceError(msg);
    }
    return out;
}

} // namespace ecfid
