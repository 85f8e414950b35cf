#include <doctest.h>

#include <cmath>
#include <complex>
#include <vector>

#include "ecfid/errors.hpp"
#include "ecfid/noise.hpp"

#ifdef ECFID_HAVE_GSL
#include <gsl/gsl_errno.h>
#include <gsl/gsl_integration.h>
#endif

using namespace ecfid;
using cx = std::complex<double>;

namespace {

NoiseModel cp_gauss(double lambda = 1.0, double mu = 0.5, double sigma = 1.0,
                    double h = 1.0, bool center = false) {
    return NoiseModel::compound_poisson_gaussian(lambda, mu, sigma, h, center);
}

NoiseModel vg_spec(double h = 1.0, bool center = false) {
    return NoiseModel::variance_gamma(0.2, 0.5, -0.1, h, center);
}

double sample_mean(const std::vector<double>& xs) {
    double s = 0;
    for (double x : xs) s += x;
    return s / double(xs.size());
}

double sample_var(const std::vector<double>& xs) {
    const double m = sample_mean(xs);
    double s = 0;
    for (double x : xs) s += (x - m) * (x - m);
    return s / double(xs.size() - 1);
}

// empirical c.f. of a sample
cx ecf_at(const std::vector<double>& xs, double u) {
    cx s{0, 0};
    for (double x : xs) s += cx{std::cos(u * x), std::sin(u * x)};
    return s / double(xs.size());
}

} // namespace

TEST_CASE("char_exponent vanishes at u = 0 for every family") {
    const NoiseModel models[] = {
        cp_gauss(), vg_spec(),
        NoiseModel::alpha_stable(1.5, 1.0, 1.0, 1.0, false),
        NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false)};
    for (const auto& m : models) {
        CHECK(std::abs(m.char_exponent(0.0)) == 0.0);
        CHECK(std::abs(m.char_fn_increment(0.0) - cx{1.0, 0.0}) == 0.0);
    }
}

TEST_CASE("compound Poisson two-point: psi(pi) = e^{i pi} - 1 = -2") {
    // lambda = 1, all jumps of size 1
    const auto m = NoiseModel::compound_poisson_two_point(1.0, 1.0, 0.0, 1.0, 1.0, false);
    const cx psi = m.char_exponent(M_PI);
    CHECK(psi.real() == doctest::Approx(-2.0).epsilon(1e-12));
    CHECK(std::abs(psi.imag()) < 1e-12);
}

TEST_CASE("CGMY closed form at the finite-variation point") {
    // independently computed with 30-digit quadrature of (e^{iux}-1) nu(dx)
    const auto m = NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false);
    const cx psi = m.char_exponent(1.0);
    CHECK(psi.real() == doctest::Approx(-0.07829600487578421).epsilon(1e-12));
    CHECK(std::abs(psi.imag()) < 1e-14);
}

TEST_CASE("CGMY closed form in the infinite-variation range") {
    // frozen from 30-digit quadrature of the compensated integral + iu E[Z_1]
    const auto m = NoiseModel::cgmy(0.7, 3.0, 2.0, 1.5, 1.0, false);
    const cx psi = m.char_exponent(1.3);
    CHECK(psi.real() == doctest::Approx(-1.3223571425309026).epsilon(1e-12));
    CHECK(psi.imag() == doctest::Approx(0.9927898039755381).epsilon(1e-12));
    CHECK(m.mean_increment() == doctest::Approx(0.7886925888918509).epsilon(1e-12));
}

#ifdef ECFID_HAVE_GSL
namespace {

struct CgmyIntegrand {
    double u, c, g, m, y;
    bool positive_side;
    bool real_part;
    bool compensated;
};

double cgmy_integrand(double x, void* params) {
    const auto* p = static_cast<const CgmyIntegrand*>(params);
    const double tempering = p->positive_side ? p->m * x : p->g * x;
    const double density = p->c * std::exp(-tempering) * std::pow(x, -1.0 - p->y);
    const double ux = p->positive_side ? p->u * x : -p->u * x;
    double f = p->real_part ? std::cos(ux) - 1.0 : std::sin(ux);
    if (p->compensated && !p->real_part) f -= ux;
    return f * density;
}

} // namespace

TEST_CASE("CGMY exponent agrees with direct quadrature of the Levy integral") {
    gsl_set_error_handler_off();
    const double c = 1.0, g = 5.0, m = 5.0, y = 0.5, u = 1.0;
    const auto model = NoiseModel::cgmy(c, g, m, y, 1.0, false);
    gsl_integration_workspace* ws = gsl_integration_workspace_alloc(4000);
    cx quad{0, 0};
    for (bool pos : {true, false}) {
        for (bool re : {true, false}) {
            CgmyIntegrand gi{u, c, g, m, y, pos, re, false};
            gsl_function f{&cgmy_integrand, &gi};
            double v1 = 0, v2 = 0, err = 0;
            gsl_integration_qags(&f, 0.0, 1.0, 1e-12, 1e-10, 4000, ws, &v1, &err);
            gsl_integration_qagiu(&f, 1.0, 1e-12, 1e-10, 4000, ws, &v2, &err);
            quad += (re ? cx{v1 + v2, 0} : cx{0, v1 + v2});
        }
    }
    gsl_integration_workspace_free(ws);
    const cx psi = model.char_exponent(u);
    CHECK(std::abs(psi - quad) < 1e-8);
}
#endif

TEST_CASE("alpha-stable exponent matches the Levy-integral closed form") {
    // values cross-checked against Gamma(-a)(-iu)^a continuation at 30 digits
    const auto m1 = NoiseModel::alpha_stable(0.7, 0.8, 1.5, 1.0, false);
    const cx p1 = m1.char_exponent(1.1);
    CHECK(p1.real() == doctest::Approx(-4.770352400635907).epsilon(1e-12));
    CHECK(p1.imag() == doctest::Approx(2.849408963267314).epsilon(1e-12));
    const auto m2 = NoiseModel::alpha_stable(1.5, 0.8, 1.5, 1.0, false);
    const cx p2 = m2.char_exponent(0.9);
    CHECK(p2.real() == doctest::Approx(-3.281635002417777).epsilon(1e-12));
    CHECK(p2.imag() == doctest::Approx(-0.9987584789967148).epsilon(1e-12));
}

TEST_CASE("VG increment c.f. equals the closed form of the spec example") {
    const auto m = vg_spec(); // sigma=0.2 nu=0.5 theta_d=-0.1 h=1
    const cx w = 1.0 - cx{0, 1} * (-0.1 * 0.5 * 1.0) + 0.5 * 0.2 * 0.2 * 0.5;
    const cx expected = std::pow(w, -1.0 / 0.5);
    CHECK(std::abs(m.char_fn_increment(1.0) - expected) < 1e-14);
    CHECK(m.char_fn_increment(1.0).real() == doctest::Approx(0.9731180350482384));
    CHECK(m.char_fn_increment(1.0).imag() == doctest::Approx(-0.0965850250981447));
}

TEST_CASE("increment c.f. has modulus <= 1 and conjugate symmetry") {
    const NoiseModel models[] = {
        cp_gauss(2.0, -0.3, 0.7, 0.5, true), vg_spec(1.0, true),
        NoiseModel::alpha_stable(0.8, 1.0, 0.2, 1.0, false),
        NoiseModel::alpha_stable(1.0, 0.3, 1.2, 1.0, false),
        NoiseModel::cgmy(0.5, 2.0, 4.0, 1.2, 2.0, true)};
    for (const auto& m : models) {
        for (double u : {-7.0, -2.0, -0.5, 0.3, 1.0, 4.0, 11.0}) {
            const cx phi = m.char_fn_increment(u);
            CHECK(std::abs(phi) <= 1.0 + 1e-12);
            const cx phin = m.char_fn_increment(-u);
            CHECK(std::abs(phin - std::conj(phi)) < 1e-13);
        }
        CHECK(std::abs(m.char_fn_increment(0.0) - cx{1, 0}) < 1e-15);
    }
}

TEST_CASE("char_exponent rejects non-finite u") {
    CHECK_THROWS_AS((void)cp_gauss().char_exponent(std::nan("")), ConfigError);
    CHECK_THROWS_AS((void)cp_gauss().char_exponent(INFINITY), ConfigError);
}

TEST_CASE("sampling is deterministic in (model, n, seed)") {
    const auto m = vg_spec(1.0, true);
    const auto a = m.sample_increments(5000, 99);
    const auto b = m.sample_increments(5000, 99);
    CHECK(a == b);
    const auto c = m.sample_increments(5000, 100);
    CHECK(a != c);
}

TEST_CASE("near-zero rate compound Poisson produces mostly zeros") {
    const auto m = NoiseModel::compound_poisson_gaussian(1e-4, 0.0, 1.0, 1.0, false);
    const auto xs = m.sample_increments(10000, 1);
    long nonzero = 0;
    for (double x : xs)
        if (x != 0.0) ++nonzero;
    CHECK(nonzero <= 10); // Poisson(1) jumps expected across the whole sample
}

TEST_CASE("centered samples have near-zero mean (CLT band)") {
    const long n = 200000;
    const NoiseModel models[] = {cp_gauss(1.0, 0.5, 1.0, 1.0, true),
                                 NoiseModel::variance_gamma(0.3, 0.4, 0.1, 1.0, true),
                                 NoiseModel::alpha_stable(1.7, 1.0, 0.5, 1.0, true)};
    int idx = 0;
    for (const auto& m : models) {
        const auto xs = m.sample_increments(n, 7 + idx++);
        const double mean = sample_mean(xs);
        const double se = std::sqrt(sample_var(xs) / double(n));
        CHECK(std::abs(mean) < 5.0 * se);
    }
}

TEST_CASE("analytic mean_increment checks out against samples") {
    SUBCASE("compound Poisson, lambda h mu") {
        const auto m = cp_gauss(2.0, 0.5, 1.0, 1.0, false);
        CHECK(m.mean_increment() == doctest::Approx(1.0));
        const auto xs = m.sample_increments(200000, 3);
        CHECK(std::abs(sample_mean(xs) - 1.0) <
              5.0 * std::sqrt(sample_var(xs) / 200000.0));
    }
    SUBCASE("variance gamma, theta_d h") {
        const auto m = NoiseModel::variance_gamma(0.25, 0.7, 0.1, 1.0, false);
        CHECK(m.mean_increment() == doctest::Approx(0.1));
        const auto xs = m.sample_increments(200000, 4);
        CHECK(std::abs(sample_mean(xs) - 0.1) <
              5.0 * std::sqrt(sample_var(xs) / 200000.0));
    }
    SUBCASE("centered models have zero mean") {
        CHECK(cp_gauss(2.0, 0.5, 1.0, 1.0, true).mean_increment() == 0.0);
        CHECK(vg_spec(1.0, true).mean_increment() == 0.0);
    }
    SUBCASE("alpha <= 1 stable mean undefined") {
        const auto m = NoiseModel::alpha_stable(0.9, 1.0, 1.0, 1.0, false);
        CHECK_THROWS_AS((void)m.mean_increment(), UnsupportedError);
    }
}

TEST_CASE("analytic variance_increment checks out against samples") {
    const auto cp = cp_gauss(1.5, 0.2, 0.8, 2.0, true);
    // lambda h (mu^2 + sigma^2)
    CHECK(cp.variance_increment() == doctest::Approx(1.5 * 2.0 * (0.04 + 0.64)));
    const auto xs = cp.sample_increments(400000, 12);
    CHECK(sample_var(xs) == doctest::Approx(cp.variance_increment()).epsilon(0.03));

    const auto vg = NoiseModel::variance_gamma(0.3, 0.4, 0.1, 1.0, true);
    CHECK(vg.variance_increment() == doctest::Approx(0.09 + 0.01 * 0.4));
    const auto ys = vg.sample_increments(400000, 13);
    CHECK(sample_var(ys) == doctest::Approx(vg.variance_increment()).epsilon(0.03));
}

TEST_CASE("sampler matches the c.f. for every samplable family (MC oracle)") {
    const long n = 200000;
    const double tol = 5.0 / std::sqrt(double(n));
    const NoiseModel models[] = {
        cp_gauss(1.0, 0.5, 1.0, 1.0, true),
        NoiseModel::compound_poisson_two_point(2.0, 1.0, -0.5, 0.3, 0.5, true),
        NoiseModel::variance_gamma(0.3, 0.4, 0.1, 0.5, true),
        NoiseModel::alpha_stable(0.7, 0.8, 1.5, 1.0, false),
        NoiseModel::alpha_stable(1.0, 0.3, 1.2, 1.0, false), // log-term branch
        NoiseModel::alpha_stable(1.5, 1.0, 0.4, 2.0, false)};
    int seed = 100;
    for (const auto& m : models) {
        const auto xs = m.sample_increments(n, seed++);
        for (double u : {0.4, 1.0, 2.7}) {
            const cx diff = ecf_at(xs, u) - m.char_fn_increment(u);
            CHECK(std::abs(diff) < tol);
        }
    }
}

TEST_CASE("levy_density examples and symmetry") {
    SUBCASE("alpha-stable closed form") {
        const auto m = NoiseModel::alpha_stable(1.5, 1.0, 1.0, 1.0, false);
        CHECK(m.levy_density(2.0) == doctest::Approx(std::pow(2.0, -2.5)));
        CHECK(m.levy_density(-2.0) == doctest::Approx(m.levy_density(2.0)));
    }
    SUBCASE("CGMY shared power factor") {
        const auto m = NoiseModel::cgmy(1.3, 2.0, 5.0, 0.7, 1.0, false);
        for (double x : {0.2, 1.0, 3.0}) {
            const double left = m.levy_density(-x) * std::exp(2.0 * x);
            const double right = m.levy_density(x) * std::exp(5.0 * x);
            CHECK(left == doctest::Approx(right).epsilon(1e-12));
        }
    }
    SUBCASE("compound Poisson: lambda times jump density / point masses") {
        const auto g = cp_gauss(2.0, 0.0, 1.0);
        CHECK(g.levy_density(0.5) ==
              doctest::Approx(2.0 * std::exp(-0.125) / std::sqrt(2.0 * M_PI)));
        const auto t = NoiseModel::compound_poisson_two_point(3.0, 1.0, -2.0, 0.25, 1.0, false);
        CHECK(t.levy_density(1.0) == 0.0);
        CHECK(t.levy_point_mass(1.0) == doctest::Approx(0.75));
        CHECK(t.levy_point_mass(-2.0) == doctest::Approx(2.25));
        CHECK(t.levy_point_mass(0.3) == 0.0);
    }
    SUBCASE("x = 0 rejected") {
        CHECK_THROWS_AS((void)cp_gauss().levy_density(0.0), ConfigError);
    }
}

TEST_CASE("constructor rejections") {
    CHECK_THROWS_AS(NoiseModel::cgmy(1.0, 0.0, 5.0, 0.5, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::cgmy(1.0, 5.0, 5.0, 1.0, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::cgmy(1.0, 5.0, 5.0, 2.0, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::variance_gamma(0.0, 0.5, 0.1, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::variance_gamma(0.2, 0.5, 0.1, 0.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::alpha_stable(2.0, 1.0, 1.0, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::alpha_stable(1.5, 0.0, 0.0, 1.0, false), ConfigError);
    CHECK_THROWS_AS(NoiseModel::alpha_stable(0.9, 1.0, 1.0, 1.0, true), ConfigError);
    CHECK_THROWS_AS(NoiseModel::compound_poisson_two_point(1.0, 1.0, 0.0, 1.5, 1.0, false),
                    ConfigError);
    CHECK_THROWS_AS(NoiseModel::compound_poisson_gaussian(0.0, 0.0, 1.0, 1.0, false),
                    ConfigError);
}

TEST_CASE("CGMY has no sampler; invalid n rejected") {
    const auto m = NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false);
    CHECK_THROWS_AS((void)m.sample_increments(10, 1), UnsupportedError);
    CHECK_THROWS_AS((void)cp_gauss().sample_increments(0, 1), ConfigError);
}

TEST_CASE("finite-variation flags") {
    CHECK(cp_gauss().is_finite_variation());
    CHECK(vg_spec().is_finite_variation());
    CHECK(NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false).is_finite_variation());
    CHECK_FALSE(NoiseModel::cgmy(1.0, 5.0, 5.0, 1.5, 1.0, false).is_finite_variation());
    CHECK(NoiseModel::alpha_stable(0.7, 1.0, 1.0, 1.0, false).is_finite_variation());
    CHECK_FALSE(NoiseModel::alpha_stable(1.5, 1.0, 1.0, 1.0, false).is_finite_variation());
}

TEST_CASE("log_cf_bound really bounds |h psi(v)| on its valid range") {
    const NoiseModel models[] = {
        cp_gauss(1.0, 0.5, 1.0, 1.0, true),
        NoiseModel::compound_poisson_two_point(2.0, 1.0, -0.5, 0.3, 0.5, true),
        NoiseModel::variance_gamma(0.3, 0.4, 0.1, 0.5, true),
        NoiseModel::alpha_stable(0.7, 0.8, 1.5, 1.0, false),
        NoiseModel::alpha_stable(1.0, 0.3, 1.2, 1.0, false),
        NoiseModel::alpha_stable(1.5, 1.0, 0.4, 2.0, false),
        NoiseModel::cgmy(0.7, 3.0, 2.0, 1.5, 1.0, true),
        NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false)};
    for (const auto& m : models) {
        const LogCfBound b = m.log_cf_bound(0.8);
        for (double v = 1e-6; v <= b.v_valid; v *= 2.5) {
            const double actual = std::abs(m.h() * m.char_exponent(v));
            CHECK(actual <= b.eval(v) * (1.0 + 1e-9));
        }
    }
}

TEST_CASE("eta round trip via with_eta") {
    const auto m = NoiseModel::compound_poisson_two_point(2.0, 1.0, -0.5, 0.3, 0.5, true);
    const auto m2 = m.with_eta(m.eta());
    CHECK(m2.eta() == m.eta());
    CHECK(m2.h() == m.h());
    CHECK(m2.centered() == m.centered());
    CHECK_THROWS_AS(m.with_eta(Eigen::VectorXd::Ones(2)), ConfigError);
}
