#include "ecfid/noise.hpp"

#include <cassert>
#include <cmath>
#include <sstream>

#include "ecfid/errors.hpp"
#include "ecfid/rng.hpp"

namespace ecfid {

namespace {

using cxd = std::complex<double>;
constexpr cxd kI{0.0, 1.0};

double gauss_pdf(double x, double mu, double sigma) {
    const double z = (x - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * M_PI));
}

// E|X| for X ~ N(mu, sigma^2)
double gauss_abs_mean(double mu, double sigma) {
    if (sigma == 0.0) return std::abs(mu);
    return sigma * std::sqrt(2.0 / M_PI) * std::exp(-0.5 * mu * mu / (sigma * sigma)) +
           mu * std::erf(mu / (sigma * std::sqrt(2.0)));
}

void require(bool ok, const std::string& msg) {
    if (!ok) throw ConfigError(msg);
}

} // namespace

double LogCfBound::eval(double v) const {
    double s = 0.0;
    for (const auto& [coef, power] : terms) s += coef * std::pow(v, power);
    return s;
}

// ---------------------------------------------------------------- builders

NoiseModel NoiseModel::compound_poisson_gaussian(double lambda, double jump_mu,
                                                 double jump_sigma, double h,
                                                 bool center) {
    NoiseModel m;
    m.family_ = NoiseFamily::CompoundPoisson;
    m.jump_law_ = JumpLaw::Gaussian;
    m.lambda_ = lambda;
    m.jump_mu_ = jump_mu;
    m.jump_sigma_ = jump_sigma;
    m.h_ = h;
    m.center_ = center;
    m.validate();
    return m;
}

NoiseModel NoiseModel::compound_poisson_two_point(double lambda, double a, double b,
                                                  double p, double h, bool center) {
    NoiseModel m;
    m.family_ = NoiseFamily::CompoundPoisson;
    m.jump_law_ = JumpLaw::TwoPoint;
    m.lambda_ = lambda;
    m.jump_a_ = a;
    m.jump_b_ = b;
    m.jump_p_ = p;
    m.h_ = h;
    m.center_ = center;
    m.validate();
    return m;
}

NoiseModel NoiseModel::variance_gamma(double sigma, double nu, double theta_d,
                                      double h, bool center) {
    NoiseModel m;
    m.family_ = NoiseFamily::VarianceGamma;
    m.sigma_ = sigma;
    m.nu_ = nu;
    m.theta_d_ = theta_d;
    m.h_ = h;
    m.center_ = center;
    m.validate();
    return m;
}

NoiseModel NoiseModel::alpha_stable(double alpha, double c_minus, double c_plus,
                                    double h, bool center) {
    NoiseModel m;
    m.family_ = NoiseFamily::AlphaStable;
    m.alpha_ = alpha;
    m.c_minus_ = c_minus;
    m.c_plus_ = c_plus;
    m.h_ = h;
    m.center_ = center;
    m.validate();
    return m;
}

NoiseModel NoiseModel::cgmy(double c, double g, double m_t, double y, double h,
                            bool center) {
    NoiseModel m;
    m.family_ = NoiseFamily::Cgmy;
    m.cgmy_c_ = c;
    m.cgmy_g_ = g;
    m.cgmy_m_ = m_t;
    m.cgmy_y_ = y;
    m.h_ = h;
    m.center_ = center;
    m.validate();
    return m;
}

void NoiseModel::validate() const {
    require(std::isfinite(h_) && h_ > 0.0, "NoiseModel: sampling interval h must be > 0");
    switch (family_) {
    case NoiseFamily::CompoundPoisson:
        require(std::isfinite(lambda_) && lambda_ > 0.0,
                "compound Poisson: rate lambda must be > 0");
        if (jump_law_ == JumpLaw::Gaussian) {
            require(std::isfinite(jump_mu_) && std::isfinite(jump_sigma_) && jump_sigma_ >= 0.0,
                    "compound Poisson: gaussian jump needs finite mu and sigma >= 0");
        } else {
            require(std::isfinite(jump_a_) && std::isfinite(jump_b_),
                    "compound Poisson: two-point jump sizes must be finite");
            require(jump_p_ >= 0.0 && jump_p_ <= 1.0,
                    "compound Poisson: two-point probability p must lie in [0,1]");
        }
        break;
    case NoiseFamily::VarianceGamma:
        require(sigma_ > 0.0, "variance gamma: sigma must be > 0");
        require(nu_ > 0.0, "variance gamma: nu must be > 0");
        require(std::isfinite(theta_d_), "variance gamma: theta_d must be finite");
        break;
    case NoiseFamily::AlphaStable:
        require(alpha_ > 0.0 && alpha_ < 2.0, "alpha-stable: alpha must lie in (0,2)");
        require(c_minus_ >= 0.0 && c_plus_ >= 0.0 && c_minus_ + c_plus_ > 0.0,
                "alpha-stable: C- and C+ must be >= 0 and not both zero");
        if (center_ && alpha_ <= 1.0)
            throw ConfigError("alpha-stable: cannot center with alpha <= 1 (mean undefined)");
        break;
    case NoiseFamily::Cgmy:
        require(cgmy_c_ > 0.0, "CGMY: C must be > 0");
        require(cgmy_g_ > 0.0, "CGMY: G must be > 0");
        require(cgmy_m_ > 0.0, "CGMY: M must be > 0");
        require(cgmy_y_ > 0.0 && cgmy_y_ < 2.0, "CGMY: Y must lie in (0,2)");
        if (cgmy_y_ == 1.0)
            throw ConfigError("CGMY: Y = 1 not supported (gamma-function pole in the closed form)");
        break;
    }
}

NoiseModel NoiseModel::with_eta(const Eigen::VectorXd& eta) const {
    auto need = [&](int n) {
        if (eta.size() != n) {
            std::ostringstream os;
            os << "with_eta: expected " << n << " parameters, got " << eta.size();
            throw ConfigError(os.str());
        }
    };
    switch (family_) {
    case NoiseFamily::CompoundPoisson:
        if (jump_law_ == JumpLaw::Gaussian) {
            need(3);
            return compound_poisson_gaussian(eta[0], eta[1], eta[2], h_, center_);
        }
        need(4);
        return compound_poisson_two_point(eta[0], eta[1], eta[2], eta[3], h_, center_);
    case NoiseFamily::VarianceGamma:
        need(3);
        return variance_gamma(eta[0], eta[1], eta[2], h_, center_);
    case NoiseFamily::AlphaStable:
        need(3);
        return alpha_stable(eta[0], eta[1], eta[2], h_, center_);
    case NoiseFamily::Cgmy:
        need(4);
        return cgmy(eta[0], eta[1], eta[2], eta[3], h_, center_);
    }
    throw ConfigError("with_eta: unknown family");
}

Eigen::VectorXd NoiseModel::eta() const {
    switch (family_) {
    case NoiseFamily::CompoundPoisson:
        if (jump_law_ == JumpLaw::Gaussian) {
            Eigen::VectorXd e(3);
            e << lambda_, jump_mu_, jump_sigma_;
            return e;
        } else {
            Eigen::VectorXd e(4);
            e << lambda_, jump_a_, jump_b_, jump_p_;
            return e;
        }
    case NoiseFamily::VarianceGamma: {
        Eigen::VectorXd e(3);
        e << sigma_, nu_, theta_d_;
        return e;
    }
    case NoiseFamily::AlphaStable: {
        Eigen::VectorXd e(3);
        e << alpha_, c_minus_, c_plus_;
        return e;
    }
    case NoiseFamily::Cgmy: {
        Eigen::VectorXd e(4);
        e << cgmy_c_, cgmy_g_, cgmy_m_, cgmy_y_;
        return e;
    }
    }
    throw ConfigError("eta: unknown family");
}

bool NoiseModel::is_finite_variation() const {
    switch (family_) {
    case NoiseFamily::CompoundPoisson: return true;  // finite activity
    case NoiseFamily::VarianceGamma:   return true;  // Y=0 analogue
    case NoiseFamily::AlphaStable:     return alpha_ < 1.0;
    case NoiseFamily::Cgmy:            return cgmy_y_ < 1.0;
    }
    return false;
}

// ------------------------------------------------------------- moments

double NoiseModel::mean_rate() const {
    switch (family_) {
    case NoiseFamily::CompoundPoisson: {
        const double jump_mean = jump_law_ == JumpLaw::Gaussian
                                     ? jump_mu_
                                     : jump_p_ * jump_a_ + (1.0 - jump_p_) * jump_b_;
        return lambda_ * jump_mean;
    }
    case NoiseFamily::VarianceGamma:
        return theta_d_;
    case NoiseFamily::AlphaStable:
        if (alpha_ <= 1.0)
            throw UnsupportedError("alpha-stable: mean undefined for alpha <= 1");
        return 0.0; // zero-mean parameterization (no drift)
    case NoiseFamily::Cgmy:
        // E[Z_1] = C Gamma(1-Y) (M^{Y-1} - G^{Y-1})
        return cgmy_c_ * std::tgamma(1.0 - cgmy_y_) *
               (std::pow(cgmy_m_, cgmy_y_ - 1.0) - std::pow(cgmy_g_, cgmy_y_ - 1.0));
    }
    throw ConfigError("mean_rate: unknown family");
}

double NoiseModel::variance_rate() const {
    switch (family_) {
    case NoiseFamily::CompoundPoisson: {
        const double jump_m2 = jump_law_ == JumpLaw::Gaussian
                                   ? jump_mu_ * jump_mu_ + jump_sigma_ * jump_sigma_
                                   : jump_p_ * jump_a_ * jump_a_ +
                                         (1.0 - jump_p_) * jump_b_ * jump_b_;
        return lambda_ * jump_m2;
    }
    case NoiseFamily::VarianceGamma:
        return sigma_ * sigma_ + theta_d_ * theta_d_ * nu_;
    case NoiseFamily::AlphaStable:
        throw UnsupportedError("alpha-stable: variance infinite");
    case NoiseFamily::Cgmy:
        return cgmy_c_ * std::tgamma(2.0 - cgmy_y_) *
               (std::pow(cgmy_m_, cgmy_y_ - 2.0) + std::pow(cgmy_g_, cgmy_y_ - 2.0));
    }
    throw ConfigError("variance_rate: unknown family");
}

double NoiseModel::mean_increment() const {
    if (family_ == NoiseFamily::AlphaStable && alpha_ <= 1.0)
        throw UnsupportedError("alpha-stable: mean undefined for alpha <= 1");
    if (center_) return 0.0;
    return h_ * mean_rate();
}

double NoiseModel::variance_increment() const {
    return h_ * variance_rate();
}

// ------------------------------------------------- characteristic exponent

std::complex<double> NoiseModel::raw_exponent(double u) const {
    switch (family_) {
    case NoiseFamily::CompoundPoisson: {
        cxd jump_cf;
        if (jump_law_ == JumpLaw::Gaussian) {
            jump_cf = std::exp(kI * (u * jump_mu_) -
                               0.5 * jump_sigma_ * jump_sigma_ * u * u);
        } else {
            jump_cf = jump_p_ * std::exp(kI * (u * jump_a_)) +
                      (1.0 - jump_p_) * std::exp(kI * (u * jump_b_));
        }
        return lambda_ * (jump_cf - 1.0);
    }
    case NoiseFamily::VarianceGamma: {
        // psi(u) = -(1/nu) Log(1 - i theta nu u + sigma^2 nu u^2 / 2).
        // The argument has real part >= 1, so the principal log never
        // crosses the cut.
        const cxd w = 1.0 - kI * (theta_d_ * nu_ * u) + 0.5 * sigma_ * sigma_ * nu_ * u * u;
        assert(w.real() >= 1.0);
        return -std::log(w) / nu_;
    }
    case NoiseFamily::AlphaStable: {
        if (u == 0.0) return 0.0;
        const double total = c_minus_ + c_plus_;
        const double beta = (c_plus_ - c_minus_) / total;
        const double au = std::abs(u);
        const double sgn = u > 0.0 ? 1.0 : -1.0;
        if (alpha_ == 1.0) {
            const double gamma_s = 0.5 * M_PI * total;
            return -gamma_s * au * (1.0 + kI * (beta * (2.0 / M_PI) * sgn * std::log(au)));
        }
        // gamma^alpha = -(C+ + C-) Gamma(-alpha) cos(pi alpha/2) > 0 on both
        // sides of alpha = 1.
        const double gamma_pow = -total * std::tgamma(-alpha_) * std::cos(0.5 * M_PI * alpha_);
        assert(gamma_pow > 0.0);
        const double tan_term = std::tan(0.5 * M_PI * alpha_);
        return -gamma_pow * std::pow(au, alpha_) * (1.0 - kI * (beta * sgn * tan_term));
    }
    case NoiseFamily::Cgmy: {
        // C Gamma(-Y) ((M-iu)^Y - M^Y + (G+iu)^Y - G^Y), principal powers.
        // Both bases have real part M, G > 0, so no branch-cut crossing.
        const cxd bm = cxd(cgmy_m_, -u);
        const cxd bg = cxd(cgmy_g_, u);
        assert(bm.real() > 0.0 && bg.real() > 0.0);
        const double gval = std::tgamma(-cgmy_y_);
        return cgmy_c_ * gval *
               (std::pow(bm, cgmy_y_) - std::pow(cxd(cgmy_m_, 0.0), cgmy_y_) +
                std::pow(bg, cgmy_y_) - std::pow(cxd(cgmy_g_, 0.0), cgmy_y_));
    }
    }
    throw ConfigError("char_exponent: unknown family");
}

std::complex<double> NoiseModel::char_exponent(double u) const {
    if (!std::isfinite(u)) throw ConfigError("char_exponent: u must be finite");
    cxd psi = raw_exponent(u);
    if (center_ && !(family_ == NoiseFamily::AlphaStable))
        psi -= kI * (u * mean_rate());
    return psi;
}

std::complex<double> NoiseModel::char_fn_increment(double u) const {
    return std::exp(h_ * char_exponent(u));
}

// ------------------------------------------------------------- sampling

std::vector<double> NoiseModel::sample_increments(long n, std::uint64_t seed) const {
    if (n < 1) throw ConfigError("sample_increments: n must be >= 1");
    if (!samplable())
        throw UnsupportedError("sample_increments: CGMY is a c.f.-only family (no sampler)");

    std::vector<double> out(static_cast<std::size_t>(n));
    const double correction = center_ && family_ != NoiseFamily::AlphaStable
                                  ? h_ * mean_rate()
                                  : 0.0;

    switch (family_) {
    case NoiseFamily::CompoundPoisson: {
        const double mean_jumps = lambda_ * h_;
        for (long i = 0; i < n; ++i) {
            Rng rng = sample_rng(seed, static_cast<std::uint64_t>(i));
            const long k = rng.poisson(mean_jumps);
            double sum = 0.0;
            for (long j = 0; j < k; ++j) {
                if (jump_law_ == JumpLaw::Gaussian)
                    sum += jump_mu_ + jump_sigma_ * rng.normal();
                else
                    sum += rng.uniform01() < jump_p_ ? jump_a_ : jump_b_;
            }
            out[static_cast<std::size_t>(i)] = sum - correction;
        }
        break;
    }
    case NoiseFamily::VarianceGamma: {
        // Gamma-subordinated Brownian motion: gamma time with mean h and
        // variance nu*h, then a Gaussian draw with drift theta_d*g and
        // variance sigma^2*g.
        const double shape = h_ / nu_;
        for (long i = 0; i < n; ++i) {
            Rng rng = sample_rng(seed, static_cast<std::uint64_t>(i));
            const double g = rng.gamma(shape, nu_);
            const double x = theta_d_ * g + sigma_ * std::sqrt(g) * rng.normal();
            out[static_cast<std::size_t>(i)] = x - correction;
        }
        break;
    }
    case NoiseFamily::AlphaStable: {
        // Chambers-Mallows-Stuck in the S1 parameterization with zero drift,
        // matching char_exponent exactly. Increment over h scales by h^{1/alpha}
        // (alpha != 1) or picks up the (2/pi) beta log-scale drift (alpha = 1).
        const double total = c_minus_ + c_plus_;
        const double beta = (c_plus_ - c_minus_) / total;
        if (alpha_ == 1.0) {
            const double scale_h = 0.5 * M_PI * total * h_;
            const double drift = (2.0 / M_PI) * beta * scale_h * std::log(scale_h);
            for (long i = 0; i < n; ++i) {
                Rng rng = sample_rng(seed, static_cast<std::uint64_t>(i));
                const double theta = M_PI * (rng.uniform01() - 0.5);
                const double w = rng.exponential();
                const double half_pi = 0.5 * M_PI;
                const double x = (2.0 / M_PI) *
                                 ((half_pi + beta * theta) * std::tan(theta) -
                                  beta * std::log((half_pi * w * std::cos(theta)) /
                                                  (half_pi + beta * theta)));
                out[static_cast<std::size_t>(i)] = scale_h * x + drift;
            }
        } else {
            const double gamma_pow =
                -total * std::tgamma(-alpha_) * std::cos(0.5 * M_PI * alpha_);
            const double scale_h = std::pow(gamma_pow * h_, 1.0 / alpha_);
            const double tan_half = std::tan(0.5 * M_PI * alpha_);
            const double theta0 = std::atan(beta * tan_half) / alpha_;
            const double s_ab = std::pow(1.0 + beta * beta * tan_half * tan_half,
                                         0.5 / alpha_);
            const double p = (1.0 - alpha_) / alpha_;
            for (long i = 0; i < n; ++i) {
                Rng rng = sample_rng(seed, static_cast<std::uint64_t>(i));
                const double theta = M_PI * (rng.uniform01() - 0.5);
                const double w = rng.exponential();
                const double x = s_ab * std::sin(alpha_ * (theta + theta0)) /
                                 std::pow(std::cos(theta), 1.0 / alpha_) *
                                 std::pow(std::cos(theta - alpha_ * (theta + theta0)) / w, p);
                out[static_cast<std::size_t>(i)] = scale_h * x;
            }
        }
        break;
    }
    case NoiseFamily::Cgmy:
        break; // unreachable
    }
    return out;
}

// ------------------------------------------------------------ Levy measure

double NoiseModel::levy_density(double x) const {
    if (x == 0.0) throw ConfigError("levy_density: x = 0 is outside the domain");
    switch (family_) {
    case NoiseFamily::CompoundPoisson:
        if (jump_law_ == JumpLaw::Gaussian)
            return lambda_ * gauss_pdf(x, jump_mu_, jump_sigma_);
        return 0.0; // purely atomic; see levy_point_mass
    case NoiseFamily::AlphaStable: {
        const double c = x < 0.0 ? c_minus_ : c_plus_;
        return c * std::pow(std::abs(x), -1.0 - alpha_);
    }
    case NoiseFamily::Cgmy: {
        const double tempering = x < 0.0 ? cgmy_g_ * std::abs(x) : cgmy_m_ * x;
        return cgmy_c_ * std::exp(-tempering) * std::pow(std::abs(x), -1.0 - cgmy_y_);
    }
    case NoiseFamily::VarianceGamma:
        throw UnsupportedError("levy_density: not provided for variance gamma");
    }
    throw ConfigError("levy_density: unknown family");
}

double NoiseModel::levy_point_mass(double x) const {
    if (x == 0.0) throw ConfigError("levy_point_mass: x = 0 is outside the domain");
    if (family_ == NoiseFamily::CompoundPoisson && jump_law_ == JumpLaw::TwoPoint) {
        double mass = 0.0;
        if (x == jump_a_) mass += lambda_ * jump_p_;
        if (x == jump_b_) mass += lambda_ * (1.0 - jump_p_);
        return mass;
    }
    return 0.0;
}

// --------------------------------------------------------------- tail bound

LogCfBound NoiseModel::log_cf_bound(double v_cap) const {
    LogCfBound b;
    b.v_valid = v_cap;
    switch (family_) {
    case NoiseFamily::CompoundPoisson: {
        const double jump_abs_mean = jump_law_ == JumpLaw::Gaussian
                                         ? gauss_abs_mean(jump_mu_, jump_sigma_)
                                         : jump_p_ * std::abs(jump_a_) +
                                               (1.0 - jump_p_) * std::abs(jump_b_);
        double coef = lambda_ * jump_abs_mean;
        if (center_) coef += std::abs(mean_rate());
        b.terms.emplace_back(h_ * coef, 1.0);
        break;
    }
    case NoiseFamily::VarianceGamma: {
        // |Log w| <= 2|w-1| while |w-1| <= 1/2; solve for the valid range.
        const double a1 = std::abs(theta_d_) * nu_;
        const double a2 = 0.5 * sigma_ * sigma_ * nu_;
        const double v_ok = (-a1 + std::sqrt(a1 * a1 + 2.0 * a2)) / (2.0 * a2);
        b.v_valid = std::min(v_cap, v_ok);
        double c1 = 2.0 * std::abs(theta_d_);
        if (center_) c1 += std::abs(theta_d_);
        b.terms.emplace_back(h_ * c1, 1.0);
        b.terms.emplace_back(h_ * sigma_ * sigma_, 2.0);
        break;
    }
    case NoiseFamily::AlphaStable: {
        const double total = c_minus_ + c_plus_;
        const double beta = std::abs(c_plus_ - c_minus_) / total;
        if (alpha_ == 1.0) {
            // |v log v| <= (2/e) sqrt(v) on (0,1]
            const double gamma_s = 0.5 * M_PI * total;
            b.v_valid = std::min(v_cap, 1.0);
            b.terms.emplace_back(h_ * gamma_s, 1.0);
            b.terms.emplace_back(h_ * gamma_s * beta * (2.0 / M_PI) * (2.0 / M_E), 0.5);
        } else {
            const double gamma_pow =
                -total * std::tgamma(-alpha_) * std::cos(0.5 * M_PI * alpha_);
            const double tan_half = std::tan(0.5 * M_PI * alpha_);
            const double amp = gamma_pow * std::sqrt(1.0 + beta * beta * tan_half * tan_half);
            b.terms.emplace_back(h_ * amp, alpha_);
        }
        break;
    }
    case NoiseFamily::Cgmy: {
        const double y = cgmy_y_;
        const double gscale = std::abs(std::tgamma(-y)) * cgmy_c_ * y;
        const double m_base = y < 1.0 ? cgmy_m_ : std::sqrt(cgmy_m_ * cgmy_m_ + v_cap * v_cap);
        const double g_base = y < 1.0 ? cgmy_g_ : std::sqrt(cgmy_g_ * cgmy_g_ + v_cap * v_cap);
        double c1 = gscale * (std::pow(m_base, y - 1.0) + std::pow(g_base, y - 1.0));
        if (center_) c1 += std::abs(mean_rate());
        b.terms.emplace_back(h_ * c1, 1.0);
        break;
    }
    }
    return b;
}

} // namespace ecfid
