#include <doctest.h>

#include <cmath>
#include <initializer_list>

#include "ecfid/errors.hpp"
#include "ecfid/optimize.hpp"

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

} // namespace

TEST_CASE("convex quadratic on a box") {
    auto cost = [](const Eigen::VectorXd& x) { return (x[0] - 3.0) * (x[0] - 3.0); };
    auto resid = [](const Eigen::VectorXd& x) { return vec({x[0] - 3.0}); };
    const auto r = minimize_cost(cost, box1(0, 10), vec({9.0}), {}, resid);
    CHECK(std::abs(r.x[0] - 3.0) < 1e-6);
    CHECK(r.cost < 1e-12);
    CHECK(r.converged);
}

TEST_CASE("two-well function: multistart finds the global well") {
    // wells at 0.5 (shallow) and 2.0 (deep)
    auto cost = [](const Eigen::VectorXd& x) {
        const double a = x[0] - 0.5, b = x[0] - 2.0;
        return std::min(0.3 + a * a, b * b * 2.0);
    };
    OptimOptions opt;
    opt.multistart = 6;
    opt.polish = false;
    const auto r = minimize_cost(cost, box1(0, 3), vec({0.5}), opt);
    CHECK(std::abs(r.x[0] - 2.0) < 1e-4);
    // single start from the shallow basin stays there
    OptimOptions one;
    one.multistart = 1;
    one.polish = false;
    const auto stuck = minimize_cost(cost, box1(0, 3), vec({0.5}), one);
    CHECK(std::abs(stuck.x[0] - 0.5) < 1e-4);
}

TEST_CASE("two-dimensional rosenbrock-like bowl with polish") {
    auto resid = [](const Eigen::VectorXd& x) {
        return vec({10.0 * (x[1] - x[0] * x[0]), 1.0 - x[0]});
    };
    auto cost = [&](const Eigen::VectorXd& x) { return resid(x).squaredNorm(); };
    Box b;
    b.lo = vec({-2.0, -2.0});
    b.hi = vec({2.0, 4.0});
    OptimOptions opt;
    opt.max_iter = 800;
    const auto r = minimize_cost(cost, b, vec({-1.2, 1.0}), opt, resid);
    CHECK(std::abs(r.x[0] - 1.0) < 1e-5);
    CHECK(std::abs(r.x[1] - 1.0) < 1e-5);
    CHECK(r.grad_norm <= 1e-4 * (1.0 + std::abs(r.cost)));
}

TEST_CASE("deterministic given identical inputs") {
    auto cost = [](const Eigen::VectorXd& x) {
        return std::sin(3.0 * x[0]) + 0.1 * x[0] * x[0];
    };
    OptimOptions opt;
    opt.polish = false;
    const auto a = minimize_cost(cost, box1(-4, 4), vec({0.0}), opt);
    const auto b = minimize_cost(cost, box1(-4, 4), vec({0.0}), opt);
    CHECK(a.x[0] == b.x[0]);
    CHECK(a.cost == b.cost);
    CHECK(a.evals == b.evals);
}

TEST_CASE("boundary hit is flagged") {
    auto cost = [](const Eigen::VectorXd& x) { return -x[0]; }; // pushes to hi
    OptimOptions opt;
    opt.polish = false;
    const auto r = minimize_cost(cost, box1(0, 1), vec({0.5}), opt);
    CHECK(r.boundary_hit);
    CHECK(r.x[0] == doctest::Approx(1.0));
}

TEST_CASE("input validation") {
    auto cost = [](const Eigen::VectorXd& x) { return x.squaredNorm(); };
    Box bad;
    bad.lo = vec({1.0});
    bad.hi = vec({0.0});
    CHECK_THROWS_AS(minimize_cost(cost, bad, vec({0.5}), {}), ConfigError);
    CHECK_THROWS_AS(minimize_cost(cost, box1(0, 1), vec({2.0}), {}), ConfigError);
    auto nan_cost = [](const Eigen::VectorXd&) { return std::nan(""); };
    CHECK_THROWS_AS(minimize_cost(nan_cost, box1(0, 1), vec({0.5}), {}),
                    NonConvergenceError);
}
