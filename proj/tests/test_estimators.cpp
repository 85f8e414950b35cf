#include <doctest.h>

#include <cmath>
#include <initializer_list>

#include "ecfid/errors.hpp"
#include "ecfid/estimators.hpp"
#include "ecfid/rng.hpp"

using namespace ecfid;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> xs) {
    Eigen::VectorXd v(static_cast<long>(xs.size()));
    long i = 0;
    for (double x : xs) v[i++] = x;
    return v;
}

Box box1(double lo, double hi) {
    Box b;
    b.lo = vec({lo});
    b.hi = vec({hi});
    return b;
}

// counting process: compound Poisson with unit jumps, lambda free
NoiseModel counting_noise(double lambda) {
    return NoiseModel::compound_poisson_two_point(lambda, 1.0, 0.0, 1.0, 1.0, true);
}

IidKnownCfProblem lambda_problem(long n, std::uint64_t data_seed) {
    IidKnownCfProblem p;
    const auto truth = counting_noise(1.0);
    p.data = truth.sample_increments(n, data_seed);
    p.phi = [](double u, const Eigen::VectorXd& eta) {
        return counting_noise(eta[0]).char_fn_increment(u);
    };
    auto phi0 = [&](double u) { return truth.char_fn_increment(u); };
    p.grid = make_scalar_grid(phi0, 8, 0.1);
    p.domain = box1(0.2, 3.0);
    p.start = vec({0.5});
    return p;
}

SystemSpec ma1_spec(double theta) {
    SystemSpec s;
    s.structure = SystemStructure::Fir;
    s.theta = vec({1.0, theta});
    return s;
}

NoiseModel ma1_noise() {
    return NoiseModel::compound_poisson_gaussian(1.0, 0.5, 1.0, 1.0, true);
}

UGrid ma1_grid(const NoiseModel& noise, double theta) {
    const SystemModel sys = SystemModel::build(ma1_spec(theta));
    auto marginal = [&](double u) {
        Eigen::VectorXd uu(1);
        uu[0] = u;
        return joint_cf(sys, noise, uu).value;
    };
    const UGrid ladder = make_scalar_grid(marginal, 2, 0.1);
    const double u_max = ladder.points.col(0).cwiseAbs().maxCoeff();
    return make_block_grid(2, 6, u_max, 321);
}

DynamicsProblem ma1_problem(long n, std::uint64_t data_seed, std::uint64_t sim_seed) {
    const auto noise = ma1_noise();
    DynamicsProblem p(noise);
    const SystemModel truth = SystemModel::build(ma1_spec(2.0));
    const int r = 2;
    const auto incs = noise.sample_increments(n + r + truth.warmup_length(), data_seed);
    p.data = truth.filter(incs, truth.warmup_length());
    p.structure = ma1_spec(2.0); // template; free component searched over the box
    p.free_theta = {1};
    p.grid = ma1_grid(noise, 2.0);
    p.n_sim = n;
    p.sim_seed = sim_seed;
    p.domain = box1(0.2, 3.5); // includes the minimum-phase reflection 0.5
    p.start = vec({1.0});
    return p;
}

} // namespace

TEST_CASE("over-determination: M must exceed the parameter count") {
    auto p = lambda_problem(200, 1);
    p.grid = UGrid::scalar(std::vector<double>{1.0}); // M = 1 = dim(eta)
    CHECK_THROWS_AS(estimate_iid_known_cf(p), ConfigError);
}

TEST_CASE("iid known-cf estimator recovers the counting rate") {
    auto p = lambda_problem(100000, 42);
    const EstimationResult res = estimate_iid_known_cf(p);
    REQUIRE(res.cov.size() == 1);
    const double sd = std::sqrt(res.cov(0, 0) / double(res.n_data));
    CHECK(std::abs(res.estimate[0] - 1.0) <= 4.0 * sd);
    CHECK(res.cov_factor == 1);
    CHECK(res.stages == 2);
    CHECK(res.weight.eps > 0.0);
    CHECK_FALSE(res.opt.boundary_hit);
}

TEST_CASE("iid known-cf estimation is deterministic") {
    auto p = lambda_problem(20000, 7);
    const auto a = estimate_iid_known_cf(p);
    const auto b = estimate_iid_known_cf(p);
    CHECK(a.estimate[0] == b.estimate[0]);
    CHECK(a.cost == b.cost);
}

TEST_CASE("simulated-score estimator: matched-path scores vanish") {
    // shift family xi = eta + rho with the same rho realization on both sides
    auto rho_sampler = [](long n, std::uint64_t seed) {
        std::vector<double> out(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = sample_rng(seed, static_cast<std::uint64_t>(i)).normal();
        return out;
    };
    const double eta_star = 0.4;
    const long n = 5000;
    const std::uint64_t shared_seed = 99;
    const auto rho = rho_sampler(n, shared_seed);
    std::vector<double> data(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) data[i] = eta_star + rho[i];

    const UGrid grid = UGrid::scalar(std::vector<double>{0.5, -0.5, 1.0, -1.0});
    std::vector<double> sim(rho.size());
    for (std::size_t i = 0; i < rho.size(); ++i) sim[i] = eta_star + rho[i];
    const Eigen::MatrixXcd scores = paired_scores_scalar(data, sim, grid);
    CHECK(scores.cwiseAbs().maxCoeff() == 0.0);
    CHECK(weighted_cost(average_scores(scores), WeightMatrix::identity(grid.size())) == 0.0);
}

TEST_CASE("simulated-score estimator input validation") {
    IidSimulatedProblem p;
    p.data = {0.1, 0.2, 0.3};
    p.mechanism = [](double rho, const Eigen::VectorXd& eta) { return eta[0] + rho; };
    p.rho_sampler = [](long n, std::uint64_t) {
        return std::vector<double>(static_cast<std::size_t>(n), 0.0);
    };
    p.grid = UGrid::scalar(std::vector<double>{0.5, -0.5, 1.0, -1.0});
    p.domain = box1(-1, 1);
    p.start = vec({0.0});
    SUBCASE("n_sim = 0 rejected") {
        p.n_sim = 0;
        CHECK_THROWS_AS(estimate_iid_simulated(p), ConfigError);
    }
    SUBCASE("two-stage needs n_sim == N") {
        p.n_sim = 5;
        p.weighting.kind = WeightingKind::TwoStage;
        CHECK_THROWS_AS(estimate_iid_simulated(p), ConfigError);
    }
}

TEST_CASE("simulated-score estimator recovers a shift (smoke)") {
    IidSimulatedProblem p;
    const long n = 20000;
    const double eta_star = 0.4;
    p.rho_sampler = [](long nn, std::uint64_t seed) {
        std::vector<double> out(static_cast<std::size_t>(nn));
        for (long i = 0; i < nn; ++i)
            out[static_cast<std::size_t>(i)] = sample_rng(seed, static_cast<std::uint64_t>(i)).normal();
        return out;
    };
    const auto rho_star = p.rho_sampler(n, 1001);
    p.data.resize(rho_star.size());
    for (std::size_t i = 0; i < rho_star.size(); ++i) p.data[i] = eta_star + rho_star[i];
    p.mechanism = [](double rho, const Eigen::VectorXd& eta) { return eta[0] + rho; };
    p.n_sim = n;
    p.sim_seed = 2002; // independent of the data
    auto phi0 = [&](double u) { return std::exp(cxd{-0.5 * u * u, u * eta_star}); };
    p.grid = make_scalar_grid(phi0, 8, 0.1);
    p.domain = box1(-2, 2);
    p.start = vec({-1.0});
    const EstimationResult res = estimate_iid_simulated(p);
    REQUIRE(res.cov.size() == 1);
    CHECK(res.cov_factor == 2);
    const double sd = std::sqrt(res.cov(0, 0) / double(n));
    CHECK(std::abs(res.estimate[0] - eta_star) <= 5.0 * sd);
}

TEST_CASE("dynamics estimator input validation") {
    auto p = ma1_problem(500, 3, 4);
    SUBCASE("nothing to estimate") {
        p.free_theta = {};
        CHECK_THROWS_AS(estimate_dynamics(p), ConfigError);
    }
    SUBCASE("n_sim = 0 rejected") {
        p.n_sim = 0;
        CHECK_THROWS_AS(estimate_dynamics(p), ConfigError);
    }
    SUBCASE("cgmy noise cannot drive the simulation") {
        DynamicsProblem q(NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, true));
        q.data = p.data;
        q.structure = p.structure;
        q.free_theta = p.free_theta;
        q.grid = p.grid;
        q.n_sim = p.n_sim;
        q.domain = p.domain;
        q.start = p.start;
        CHECK_THROWS_AS(estimate_dynamics(q), UnsupportedError);
    }
}

TEST_CASE("dynamics estimator finds the non-minimum-phase truth (smoke)") {
    auto p = ma1_problem(8000, 11, 12);
    const EstimationResult res = estimate_dynamics(p);
    CHECK(res.estimate[0] > 1.0);
    CHECK(res.estimate[0] < 3.0);
    CHECK(std::abs(res.estimate[0] - 2.0) < 0.4);
    CHECK(res.cov_factor == 2);
    CHECK(res.stages == 2);
    // first-order condition at the reported optimum
    CHECK(res.opt.grad_norm <= 1e-4 * (1.0 + std::abs(res.cost)));
    // cost separation against the minimum-phase reflection
    const double at_truth = dynamics_cost_at(p, vec({2.0}));
    const double at_reflection = dynamics_cost_at(p, vec({0.5}));
    CHECK(at_reflection > at_truth);
}

TEST_CASE("dynamics cost is a deterministic function of theta (CRN)") {
    auto p = ma1_problem(3000, 21, 22);
    const double c1 = dynamics_cost_at(p, vec({1.7}));
    const double c2 = dynamics_cost_at(p, vec({1.7}));
    CHECK(c1 == c2);
    const auto a = estimate_dynamics(p);
    const auto b = estimate_dynamics(p);
    CHECK(a.estimate[0] == b.estimate[0]);
    CHECK(a.cost == b.cost);
}

TEST_CASE("boundary hit is reported") {
    auto p = ma1_problem(3000, 31, 32);
    p.domain = box1(0.2, 1.0); // truth 2.0 lies outside
    p.start = vec({0.6});
    p.weighting.kind = WeightingKind::IdentityOnly;
    const EstimationResult res = estimate_dynamics(p);
    CHECK(res.opt.boundary_hit);
}

TEST_CASE("joint estimator validation and consistency with dynamics") {
    const auto noise = ma1_noise();
    JointProblem jp(noise);
    auto dp = ma1_problem(4000, 41, 42);
    jp.data = dp.data;
    jp.structure = dp.structure;
    jp.free_theta = {1};
    jp.grid = dp.grid;
    jp.n_sim = dp.n_sim;
    jp.sim_seed = dp.sim_seed;
    jp.domain = dp.domain;
    jp.start = dp.start;

    SUBCASE("M <= p + q rejected") {
        JointProblem bad = jp;
        const auto names_count = 3; // lambda, mu, sigma all free
        bad.free_eta = {0, 1, 2};
        Box big;
        big.lo = vec({0.2, 0.5, 0.1, 0.5});
        big.hi = vec({3.5, 2.0, 1.0, 2.0});
        bad.domain = big;
        bad.start = vec({1.0, 1.0, 0.5, 1.0});
        // M = 6 > 4 here, so shrink the grid to force the rejection
        UGrid small;
        small.r = 2;
        small.points = jp.grid.points.topRows(4);
        bad.grid = small;
        CHECK_THROWS_AS(estimate_joint(bad), ConfigError);
        (void)names_count;
    }

    SUBCASE("eta pinned at the truth reproduces the dynamics cost surface") {
        for (double th : {1.0, 1.7, 2.0, 2.6}) {
            const double joint = joint_cost_at(jp, vec({th}));
            const double dyn = dynamics_cost_at(dp, vec({th}));
            CHECK(joint == dyn);
        }
    }

    SUBCASE("joint smoke run stays near (theta*, lambda*)") {
        JointProblem run = jp;
        run.free_eta = {0}; // lambda
        Box b2;
        b2.lo = vec({0.2, 0.3});
        b2.hi = vec({3.5, 2.5});
        run.domain = b2;
        run.start = vec({1.0, 0.8});
        run.opt.multistart = 3;
        const EstimationResult res = estimate_joint(run);
        CHECK(res.cov_factor == 0);
        CHECK(res.cov.size() == 0);
        CHECK(std::abs(res.estimate[0] - 2.0) < 0.6);
        CHECK(std::abs(res.estimate[1] - 1.0) < 0.5);
    }
}
