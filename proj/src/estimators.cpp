#include "ecfid/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "ecfid/errors.hpp"
#include "ecfid/rng.hpp"

namespace ecfid {

namespace {

cxd cis(double x) { return {std::cos(x), std::sin(x)}; }

void check_overdetermined(int m, int p) {
    if (m <= p) {
        std::ostringstream os;
        os << "need more moment conditions than parameters (M = " << m
           << ", parameters = " << p << ")";
        throw ConfigError(os.str());
    }
}

void check_free_indices(const std::vector<int>& idx, int size, const char* what) {
    if (idx.empty())
        throw ConfigError(std::string(what) + ": nothing to estimate (no free parameters)");
    for (int i : idx)
        if (i < 0 || i >= size)
            throw ConfigError(std::string(what) + ": free index out of range");
    for (std::size_t a = 0; a < idx.size(); ++a)
        for (std::size_t b = a + 1; b < idx.size(); ++b)
            if (idx[a] == idx[b])
                throw ConfigError(std::string(what) + ": duplicate free index");
}

Eigen::VectorXd fill_free(const Eigen::VectorXd& tmpl, const std::vector<int>& idx,
                          const Eigen::VectorXd& values) {
    Eigen::VectorXd full = tmpl;
    for (std::size_t i = 0; i < idx.size(); ++i)
        full[idx[i]] = values[static_cast<long>(i)];
    return full;
}

// Fixed warmup for one estimation run, so that common random numbers keep the
// cost surface smooth in theta (a theta-dependent warmup would shift the
// simulated sample alignment between evaluations). Probes the box for the
// largest warmup any candidate theta needs.
int fixed_warmup(const SystemSpec& structure, const std::vector<int>& free_theta,
                 const Box& theta_box, const Eigen::VectorXd& start, double margin) {
    if (structure.structure == SystemStructure::Fir)
        return static_cast<int>(structure.theta.size()) - 1; // exact support

    int warm = 0;
    auto probe = [&](const Eigen::VectorXd& tf) {
        try {
            const SystemModel sys =
                SystemModel::build({structure.structure, structure.p_a, structure.p_b,
                                    structure.dim, fill_free(structure.theta, free_theta, tf)},
                                   margin);
            warm = std::max(warm, sys.warmup_length());
        } catch (const ConfigError&) {
            // unstable corner of the box: the optimizer will never hold it
        }
    };
    probe(start);
    // deterministic probe of the box: corners for small p, fixed lattice otherwise
    const int p = theta_box.dim();
    if (p <= 4) {
        for (int mask = 0; mask < (1 << p); ++mask) {
            Eigen::VectorXd tf(p);
            for (int i = 0; i < p; ++i)
                tf[i] = (mask >> i) & 1 ? theta_box.hi[i] : theta_box.lo[i];
            probe(tf);
        }
    }
    Rng rng(0xECF1Du);
    for (int k = 0; k < 32; ++k) {
        Eigen::VectorXd tf(p);
        for (int i = 0; i < p; ++i) tf[i] = rng.uniform(theta_box.lo[i], theta_box.hi[i]);
        probe(tf);
    }
    return std::min(std::max(warm, 1), 2'000'000);
}

struct StageOutcome {
    OptimResult opt;
    WeightMatrix weight;
    int stages = 1;
};

// Shared two-stage driver: minimize with K = I (or the fixed K), then refit
// the weight from the stage-1 estimate and re-minimize from there.
StageOutcome run_staged(
    const std::function<double(const Eigen::VectorXd&, const WeightMatrix&)>& cost_with,
    const std::function<Eigen::VectorXd(const Eigen::VectorXd&, const WeightMatrix&)>& resid_with,
    const std::function<WeightMatrix(const Eigen::VectorXd&)>& refit_weight,
    const Weighting& weighting, const Box& box, const Eigen::VectorXd& start,
    const OptimOptions& options, int m) {
    StageOutcome out;
    WeightMatrix k1 = weighting.kind == WeightingKind::Fixed ? weighting.fixed
                                                             : WeightMatrix::identity(m);
    auto bind = [&](const WeightMatrix& k) {
        return std::pair<CostFn, ResidualFn>{
            [&, k](const Eigen::VectorXd& x) { return cost_with(x, k); },
            [&, k](const Eigen::VectorXd& x) { return resid_with(x, k); }};
    };
    auto [c1, r1] = bind(k1);
    out.opt = minimize_cost(c1, box, start, options, r1);
    out.weight = k1;
    if (weighting.kind == WeightingKind::TwoStage) {
        const WeightMatrix k2 = refit_weight(out.opt.x);
        OptimOptions second = options;
        second.multistart = 1; // continue from the first-stage estimate
        auto [c2, r2] = bind(k2);
        out.opt = minimize_cost(c2, box, out.opt.x, second, r2);
        out.weight = k2;
        out.stages = 2;
    }
    return out;
}

} // namespace

// ------------------------------------------------------------- iid known cf

EstimationResult estimate_iid_known_cf(const IidKnownCfProblem& problem) {
    problem.grid.validate();
    if (problem.grid.r != 1)
        throw ConfigError("estimate_iid_known_cf: requires a scalar grid");
    if (problem.data.empty()) throw ConfigError("estimate_iid_known_cf: empty data");
    if (!problem.phi) throw ConfigError("estimate_iid_known_cf: missing c.f.");
    problem.domain.validate();
    const int m = problem.grid.size();
    const int p = problem.domain.dim();
    check_overdetermined(m, p);

    const Eigen::VectorXd us = problem.grid.points.col(0);
    const Eigen::VectorXcd emp = ecf_scalar(problem.data, us);

    auto hbar_at = [&](const Eigen::VectorXd& eta) {
        Eigen::VectorXcd h(m);
        for (int k = 0; k < m; ++k) h[k] = emp[k] - problem.phi(us[k], eta);
        return h;
    };
    auto cost_with = [&](const Eigen::VectorXd& eta, const WeightMatrix& k) {
        return weighted_cost(hbar_at(eta), k);
    };
    auto resid_with = [&](const Eigen::VectorXd& eta, const WeightMatrix& k) {
        return whitened_residual(hbar_at(eta), k);
    };
    auto refit = [&](const Eigen::VectorXd& eta1) {
        auto phi1 = [&](double u) { return problem.phi(u, eta1); };
        return regularized(theory_cov_C(phi1, problem.grid).K);
    };

    const StageOutcome staged = run_staged(cost_with, resid_with, refit,
                                           problem.weighting, problem.domain,
                                           problem.start, problem.opt, m);

    EstimationResult res;
    res.estimate = staged.opt.x;
    res.cost = staged.opt.cost;
    res.weight = staged.weight;
    res.opt = staged.opt;
    res.stages = staged.stages;
    res.n_data = static_cast<long>(problem.data.size());
    res.cov_factor = 1;

    auto phi_vec = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& eta) {
        return problem.phi(u[0], eta);
    };
    const Sensitivity g = sensitivity_matrix(phi_vec, problem.grid, res.estimate,
                                             problem.fd_step);
    auto phi_hat = [&](double u) { return problem.phi(u, res.estimate); };
    const WeightMatrix c_hat = regularized(theory_cov_C(phi_hat, problem.grid).K);
    res.cov = asymptotic_cov(g.rows, c_hat, 1.0);
    return res;
}

// ------------------------------------------------------------ iid simulated

EstimationResult estimate_iid_simulated(const IidSimulatedProblem& problem) {
    problem.grid.validate();
    if (problem.grid.r != 1)
        throw ConfigError("estimate_iid_simulated: requires a scalar grid");
    if (problem.data.empty()) throw ConfigError("estimate_iid_simulated: empty data");
    if (problem.n_sim < 1)
        throw ConfigError("estimate_iid_simulated: n_sim must be >= 1");
    if (!problem.mechanism || !problem.rho_sampler)
        throw ConfigError("estimate_iid_simulated: missing mechanism or rho sampler");
    problem.domain.validate();
    const int m = problem.grid.size();
    const int p = problem.domain.dim();
    check_overdetermined(m, p);
    const long n = static_cast<long>(problem.data.size());
    if (problem.weighting.kind == WeightingKind::TwoStage && problem.n_sim != n)
        throw ConfigError("estimate_iid_simulated: two-stage weighting needs n_sim == N "
                          "(per-sample score pairing)");

    const Eigen::VectorXd us = problem.grid.points.col(0);
    const Eigen::VectorXcd emp = ecf_scalar(problem.data, us);
    // common random numbers: one rho realization for every eta evaluated
    const std::vector<double> rho = problem.rho_sampler(problem.n_sim, problem.sim_seed);
    if (rho.size() != static_cast<std::size_t>(problem.n_sim))
        throw ConfigError("estimate_iid_simulated: rho sampler returned wrong length");

    std::vector<double> xi(rho.size());
    auto simulate = [&](const Eigen::VectorXd& eta) -> const std::vector<double>& {
        for (std::size_t i = 0; i < rho.size(); ++i)
            xi[i] = problem.mechanism(rho[i], eta);
        return xi;
    };
    auto hbar_at = [&](const Eigen::VectorXd& eta) {
        const auto& sim = simulate(eta);
        return (emp - ecf_scalar(sim, us)).eval();
    };
    auto cost_with = [&](const Eigen::VectorXd& eta, const WeightMatrix& k) {
        return weighted_cost(hbar_at(eta), k);
    };
    auto resid_with = [&](const Eigen::VectorXd& eta, const WeightMatrix& k) {
        return whitened_residual(hbar_at(eta), k);
    };
    auto refit = [&](const Eigen::VectorXd& eta1) {
        // empirical Lambda' from paired per-sample scores at the stage-1 point
        const auto& sim = simulate(eta1);
        const Eigen::MatrixXcd scores = paired_scores_scalar(problem.data, sim, problem.grid);
        return regularized(empirical_cov(average_scores(scores)));
    };

    const StageOutcome staged = run_staged(cost_with, resid_with, refit,
                                           problem.weighting, problem.domain,
                                           problem.start, problem.opt, m);

    EstimationResult res;
    res.estimate = staged.opt.x;
    res.cost = staged.opt.cost;
    res.weight = staged.weight;
    res.opt = staged.opt;
    res.stages = staged.stages;
    res.n_data = n;
    res.n_sim = problem.n_sim;
    res.seeds = {problem.sim_seed};
    res.cov_factor = 2;

    // G from the CRN-simulated mean as the c.f. surrogate; C from the paired
    // empirical score covariance (Lambda'/2).
    auto phi_surrogate = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& eta) {
        const auto& sim = simulate(eta);
        Eigen::VectorXd one(1);
        one[0] = u[0];
        return ecf_scalar(sim, one)[0];
    };
    const Sensitivity g = sensitivity_matrix(phi_surrogate, problem.grid, res.estimate,
                                             problem.fd_step);
    const auto& sim_hat = simulate(res.estimate);
    const Eigen::MatrixXcd scores_hat =
        paired_scores_scalar(problem.data, sim_hat, problem.grid);
    const Eigen::MatrixXcd lambda_prime = empirical_cov(average_scores(scores_hat));
    const WeightMatrix c_hat = regularized(0.5 * lambda_prime);
    res.cov = asymptotic_cov(g.rows, c_hat, 2.0);
    return res;
}

// ----------------------------------------------------------------- dynamics

namespace {

// Simulation engine shared by estimate_dynamics and estimate_joint so the
// two cost surfaces coincide exactly when eta is pinned at the truth.
struct SimCost {
    const SystemSpec* structure;
    const std::vector<int>* free_theta;
    double margin;
    int warmup;
    long n_sim;
    int r;
    const UGrid* grid;
    Eigen::VectorXcd real_ecf;

    Eigen::VectorXcd hbar(const Eigen::VectorXd& theta_free,
                          const std::vector<double>& increments) const {
        const SystemModel sys = SystemModel::build(
            {structure->structure, structure->p_a, structure->p_b, structure->dim,
             fill_free(structure->theta, *free_theta, theta_free)},
            margin);
        const std::vector<double> out = sys.filter(increments, warmup);
        const BlockSeries blocks = make_blocks(out, r);
        return (real_ecf - ecf_blocks(blocks, *grid)).eval();
    }
};

void validate_dynamics_common(const SystemSpec& structure,
                              const std::vector<int>& free_theta, const UGrid& grid,
                              const std::vector<double>& data, long n_sim,
                              const Box& domain, int extra_params) {
    grid.validate();
    domain.validate();
    check_free_indices(free_theta, structure.theta_size(), "free_theta");
    if (static_cast<long>(data.size()) <= grid.r)
        throw ConfigError("dynamics: data must be longer than the block length r");
    if (n_sim < 1) throw ConfigError("dynamics: n_sim must be >= 1");
    const int p = static_cast<int>(free_theta.size()) + extra_params;
    if (domain.dim() != p)
        throw ConfigError("dynamics: domain dimension != number of free parameters");
    check_overdetermined(grid.size(), p);
}

} // namespace

EstimationResult estimate_dynamics(const DynamicsProblem& problem) {
    validate_dynamics_common(problem.structure, problem.free_theta, problem.grid,
                             problem.data, problem.n_sim, problem.domain, 0);
    if (!problem.noise.samplable())
        throw UnsupportedError("estimate_dynamics: noise family has no sampler");
    const int r = problem.grid.r;
    const int m = problem.grid.size();
    const long n = static_cast<long>(problem.data.size()) - r;

    SimCost engine;
    engine.structure = &problem.structure;
    engine.free_theta = &problem.free_theta;
    engine.margin = problem.stability_margin;
    engine.warmup = fixed_warmup(problem.structure, problem.free_theta, problem.domain,
                                 problem.start, problem.stability_margin);
    engine.n_sim = problem.n_sim;
    engine.r = r;
    engine.grid = &problem.grid;
    engine.real_ecf = ecf_blocks(make_blocks(problem.data, r), problem.grid);

    const std::vector<double> incs = problem.noise.sample_increments(
        problem.n_sim + r + engine.warmup, problem.sim_seed);

    auto cost_with = [&](const Eigen::VectorXd& tf, const WeightMatrix& k) {
        return weighted_cost(engine.hbar(tf, incs), k);
    };
    auto resid_with = [&](const Eigen::VectorXd& tf, const WeightMatrix& k) {
        return whitened_residual(engine.hbar(tf, incs), k);
    };
    auto lambda_at = [&](const Eigen::VectorXd& tf) {
        const SystemModel sys = SystemModel::build(
            {problem.structure.structure, problem.structure.p_a, problem.structure.p_b,
             problem.structure.dim, fill_free(problem.structure.theta, problem.free_theta, tf)},
            problem.stability_margin);
        return theory_cov_Lambda(JointCfEvaluator(sys, problem.noise, problem.joint_cf_tol),
                                 problem.grid);
    };
    auto refit = [&](const Eigen::VectorXd& tf) {
        return regularized(doubled(lambda_at(tf)).K); // K = Lambda' = 2 Lambda
    };

    const StageOutcome staged = run_staged(cost_with, resid_with, refit,
                                           problem.weighting, problem.domain,
                                           problem.start, problem.opt, m);

    EstimationResult res;
    res.estimate = staged.opt.x;
    res.cost = staged.opt.cost;
    res.weight = staged.weight;
    res.opt = staged.opt;
    res.stages = staged.stages;
    res.n_data = n;
    res.n_sim = problem.n_sim;
    res.seeds = {problem.sim_seed};
    res.cov_factor = 2;

    auto phi_theta = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& tf) {
        const SystemModel sys = SystemModel::build(
            {problem.structure.structure, problem.structure.p_a, problem.structure.p_b,
             problem.structure.dim, fill_free(problem.structure.theta, problem.free_theta, tf)},
            problem.stability_margin);
        return joint_cf(sys, problem.noise, u, problem.joint_cf_tol).value;
    };
    const Sensitivity h = sensitivity_matrix(phi_theta, problem.grid, res.estimate,
                                             problem.fd_step);
    const WeightMatrix lam = regularized(lambda_at(res.estimate).K);
    res.cov = asymptotic_cov(h.rows, lam, 2.0);
    return res;
}

double dynamics_cost_at(const DynamicsProblem& problem, const Eigen::VectorXd& theta_free) {
    validate_dynamics_common(problem.structure, problem.free_theta, problem.grid,
                             problem.data, problem.n_sim, problem.domain, 0);
    const int r = problem.grid.r;
    SimCost engine;
    engine.structure = &problem.structure;
    engine.free_theta = &problem.free_theta;
    engine.margin = problem.stability_margin;
    engine.warmup = fixed_warmup(problem.structure, problem.free_theta, problem.domain,
                                 problem.start, problem.stability_margin);
    engine.n_sim = problem.n_sim;
    engine.r = r;
    engine.grid = &problem.grid;
    engine.real_ecf = ecf_blocks(make_blocks(problem.data, r), problem.grid);
    const std::vector<double> incs = problem.noise.sample_increments(
        problem.n_sim + r + engine.warmup, problem.sim_seed);
    return weighted_cost(engine.hbar(theta_free, incs),
                         WeightMatrix::identity(problem.grid.size()));
}

// -------------------------------------------------------------------- joint

namespace {

struct JointSplit {
    Eigen::VectorXd theta_free;
    Eigen::VectorXd eta_free;
};

JointSplit split_params(const Eigen::VectorXd& x, std::size_t n_theta) {
    JointSplit s;
    s.theta_free = x.head(static_cast<long>(n_theta));
    s.eta_free = x.tail(x.size() - static_cast<long>(n_theta));
    return s;
}

} // namespace

EstimationResult estimate_joint(const JointProblem& problem) {
    const int q = static_cast<int>(problem.free_eta.size());
    validate_dynamics_common(problem.structure, problem.free_theta, problem.grid,
                             problem.data, problem.n_sim, problem.domain, q);
    if (q > 0) check_free_indices(problem.free_eta,
                                  static_cast<int>(problem.noise.eta().size()), "free_eta");
    if (!problem.noise.samplable())
        throw UnsupportedError("estimate_joint: noise family has no sampler");
    const int r = problem.grid.r;
    const int m = problem.grid.size();
    const long n = static_cast<long>(problem.data.size()) - r;
    const std::size_t n_theta = problem.free_theta.size();

    Box theta_box;
    theta_box.lo = problem.domain.lo.head(static_cast<long>(n_theta));
    theta_box.hi = problem.domain.hi.head(static_cast<long>(n_theta));

    SimCost engine;
    engine.structure = &problem.structure;
    engine.free_theta = &problem.free_theta;
    engine.margin = problem.stability_margin;
    engine.warmup = fixed_warmup(problem.structure, problem.free_theta, theta_box,
                                 problem.start.head(static_cast<long>(n_theta)),
                                 problem.stability_margin);
    engine.n_sim = problem.n_sim;
    engine.r = r;
    engine.grid = &problem.grid;
    engine.real_ecf = ecf_blocks(make_blocks(problem.data, r), problem.grid);

    const Eigen::VectorXd eta_template = problem.noise.eta();
    const long n_incs = problem.n_sim + r + engine.warmup;

    auto hbar_at = [&](const Eigen::VectorXd& x) {
        const JointSplit s = split_params(x, n_theta);
        const NoiseModel noise =
            problem.noise.with_eta(fill_free(eta_template, problem.free_eta, s.eta_free));
        // same seed for every eta: common random numbers across the search
        const std::vector<double> incs = noise.sample_increments(n_incs, problem.sim_seed);
        return engine.hbar(s.theta_free, incs);
    };
    auto cost_with = [&](const Eigen::VectorXd& x, const WeightMatrix& k) {
        return weighted_cost(hbar_at(x), k);
    };
    auto resid_with = [&](const Eigen::VectorXd& x, const WeightMatrix& k) {
        return whitened_residual(hbar_at(x), k);
    };
    auto refit = [&](const Eigen::VectorXd& x1) {
        if (problem.n_sim != n)
            throw ConfigError("estimate_joint: two-stage weighting needs n_sim == N");
        const JointSplit s = split_params(x1, n_theta);
        const NoiseModel noise =
            problem.noise.with_eta(fill_free(eta_template, problem.free_eta, s.eta_free));
        const std::vector<double> incs = noise.sample_increments(n_incs, problem.sim_seed);
        const SystemModel sys = SystemModel::build(
            {problem.structure.structure, problem.structure.p_a, problem.structure.p_b,
             problem.structure.dim,
             fill_free(problem.structure.theta, problem.free_theta, s.theta_free)},
            problem.stability_margin);
        const std::vector<double> out = sys.filter(incs, engine.warmup);
        const Eigen::MatrixXcd scores = paired_scores_blocks(
            make_blocks(problem.data, r), make_blocks(out, r), problem.grid);
        return regularized(empirical_cov(average_scores(scores)));
    };

    const StageOutcome staged = run_staged(cost_with, resid_with, refit,
                                           problem.weighting, problem.domain,
                                           problem.start, problem.opt, m);

    EstimationResult res;
    res.estimate = staged.opt.x;
    res.cost = staged.opt.cost;
    res.weight = staged.weight;
    res.opt = staged.opt;
    res.stages = staged.stages;
    res.n_data = n;
    res.n_sim = problem.n_sim;
    res.seeds = {problem.sim_seed};
    res.cov_factor = 0; // no joint covariance is established
    return res;
}

double joint_cost_at(const JointProblem& problem, const Eigen::VectorXd& params) {
    const int q = static_cast<int>(problem.free_eta.size());
    validate_dynamics_common(problem.structure, problem.free_theta, problem.grid,
                             problem.data, problem.n_sim, problem.domain, q);
    const std::size_t n_theta = problem.free_theta.size();
    Box theta_box;
    theta_box.lo = problem.domain.lo.head(static_cast<long>(n_theta));
    theta_box.hi = problem.domain.hi.head(static_cast<long>(n_theta));

    SimCost engine;
    engine.structure = &problem.structure;
    engine.free_theta = &problem.free_theta;
    engine.margin = problem.stability_margin;
    engine.warmup = fixed_warmup(problem.structure, problem.free_theta, theta_box,
                                 problem.start.head(static_cast<long>(n_theta)),
                                 problem.stability_margin);
    engine.n_sim = problem.n_sim;
    engine.r = problem.grid.r;
    engine.grid = &problem.grid;
    engine.real_ecf = ecf_blocks(make_blocks(problem.data, problem.grid.r), problem.grid);

    const JointSplit s = split_params(params, n_theta);
    const NoiseModel noise = problem.noise.with_eta(
        fill_free(problem.noise.eta(), problem.free_eta, s.eta_free));
    const std::vector<double> incs =
        noise.sample_increments(problem.n_sim + problem.grid.r + engine.warmup,
                                problem.sim_seed);
    return weighted_cost(engine.hbar(s.theta_free, incs),
                         WeightMatrix::identity(problem.grid.size()));
}

// ------------------------------------------------------------ paired scores

Eigen::MatrixXcd paired_scores_scalar(std::span<const double> observed,
                                      std::span<const double> simulated,
                                      const UGrid& grid) {
    if (grid.r != 1) throw ConfigError("paired_scores_scalar: scalar grid required");
    if (observed.size() != simulated.size() || observed.empty())
        throw ConfigError("paired_scores_scalar: series must have equal positive length");
    const long n = static_cast<long>(observed.size());
    const int m = grid.size();
    Eigen::MatrixXcd scores(n, m);
    for (int k = 0; k < m; ++k) {
        const double u = grid.points(k, 0);
        for (long i = 0; i < n; ++i)
            scores(i, k) = cis(u * observed[static_cast<std::size_t>(i)]) -
                           cis(u * simulated[static_cast<std::size_t>(i)]);
    }
    return scores;
}

Eigen::MatrixXcd paired_scores_blocks(const BlockSeries& observed,
                                      const BlockSeries& simulated,
                                      const UGrid& grid) {
    if (observed.r != grid.r || simulated.r != grid.r)
        throw ConfigError("paired_scores_blocks: block length mismatch");
    if (observed.count() != simulated.count() || observed.count() < 1)
        throw ConfigError("paired_scores_blocks: block counts must match");
    const long n = observed.count();
    const int m = grid.size();
    Eigen::MatrixXcd scores(n, m);
    for (int k = 0; k < m; ++k) {
        const Eigen::VectorXd u = grid.point(k);
        for (long i = 0; i < n; ++i)
            scores(i, k) = cis(observed.blocks.row(i).dot(u)) -
                           cis(simulated.blocks.row(i).dot(u));
    }
    return scores;
}

} // namespace ecfid
