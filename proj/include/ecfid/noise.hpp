#ifndef ECFID_NOISE_HPP
#define ECFID_NOISE_HPP

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ecfid {

enum class NoiseFamily { CompoundPoisson, VarianceGamma, AlphaStable, Cgmy };
enum class JumpLaw { Gaussian, TwoPoint };

/// Upper bound on |h * psi(v)| of the form sum_i coef[i] * |v|^power[i],
/// valid for |v| <= v_valid. Used to certify truncation of the infinite
/// product joint characteristic function.
struct LogCfBound {
    double v_valid = 0.0;
    std::vector<std::pair<double, double>> terms; // (coef, power)
    double eval(double v) const;
};

/// A parametric Levy increment family: evaluates the characteristic
/// exponent/function of the increment over a sampling interval h, samples
/// increment sequences, and exposes the Levy density.
///
/// Immutable after construction; safe to share read-only across threads.
/// Sampling is fully determined by (model, n, seed).
class NoiseModel {
public:
    // ---- constructors (validate all parameter ranges) ----
    static NoiseModel compound_poisson_gaussian(double lambda, double jump_mu,
                                                double jump_sigma, double h,
                                                bool center);
    /// Jumps equal to `a` with probability p, `b` with probability 1-p.
    static NoiseModel compound_poisson_two_point(double lambda, double a, double b,
                                                 double p, double h, bool center);
    static NoiseModel variance_gamma(double sigma, double nu, double theta_d,
                                     double h, bool center);
    /// Levy measure C^- |x|^{-1-alpha} on x<0 plus C^+ |x|^{-1-alpha} on x>0.
    /// For alpha > 1 the increments are zero-mean by construction; for
    /// alpha <= 1 the mean is undefined and center=true is rejected.
    static NoiseModel alpha_stable(double alpha, double c_minus, double c_plus,
                                   double h, bool center);
    /// Tempered stable; c.f.-only family (no sampler). Y = 1 rejected.
    static NoiseModel cgmy(double c, double g, double m_t, double y, double h,
                           bool center);

    /// Rebuild from a family tag and packed eta vector (layouts below);
    /// used by estimators that move eta around.
    ///   CompoundPoisson/Gaussian: (lambda, jump_mu, jump_sigma)
    ///   CompoundPoisson/TwoPoint: (lambda, a, b, p)
    ///   VarianceGamma:            (sigma, nu, theta_d)
    ///   AlphaStable:              (alpha, c_minus, c_plus)
    ///   Cgmy:                     (c, g, m_t, y)
    NoiseModel with_eta(const Eigen::VectorXd& eta) const;
    Eigen::VectorXd eta() const;

    NoiseFamily family() const { return family_; }
    JumpLaw jump_law() const { return jump_law_; }
    double h() const { return h_; }
    bool centered() const { return center_; }
    bool samplable() const { return family_ != NoiseFamily::Cgmy; }
    bool is_finite_variation() const;

    /// Characteristic exponent psi(u) per unit time, E[e^{iuZ_t}]=e^{t psi(u)}.
    /// Mean-corrected (psi(u) - iu E[Z_1]) when the model is centered.
    std::complex<double> char_exponent(double u) const;

    /// C.f. of one increment over h: exp(h * char_exponent(u)).
    std::complex<double> char_fn_increment(double u) const;

    /// Analytic E[delta Z] over one interval h, before centering; 0 when
    /// centered. Throws for alpha-stable with alpha <= 1 (mean undefined).
    double mean_increment() const;

    /// Analytic Var[delta Z] over one interval h. Throws when infinite
    /// (alpha-stable).
    double variance_increment() const;

    /// n i.i.d. increments over interval h. Deterministic in (model, n, seed)
    /// and independent of threading (per-sample engines).
    std::vector<double> sample_increments(long n, std::uint64_t seed) const;

    /// Density of the absolutely continuous part of the Levy measure at
    /// x != 0. Two-point compound Poisson has no density (returns 0);
    /// use levy_point_mass for its atoms. Not defined for VG.
    double levy_density(double x) const;

    /// Mass of an atom of the Levy measure at x (0 except for two-point
    /// compound Poisson at a and b).
    double levy_point_mass(double x) const;

    /// Certified small-argument bound on |h*psi(v)|; see LogCfBound.
    /// v_cap limits the validity range actually needed by the caller.
    LogCfBound log_cf_bound(double v_cap) const;

private:
    NoiseModel() = default;
    void validate() const;

    // per-unit-time mean/variance of Z_1 before centering
    double mean_rate() const;
    double variance_rate() const;
    std::complex<double> raw_exponent(double u) const;

    NoiseFamily family_ = NoiseFamily::CompoundPoisson;
    JumpLaw jump_law_ = JumpLaw::Gaussian; // compound Poisson only
    double h_ = 1.0;
    bool center_ = false;
    // family parameters (see with_eta layouts)
    double lambda_ = 0, jump_mu_ = 0, jump_sigma_ = 0; // CP gaussian
    double jump_a_ = 0, jump_b_ = 0, jump_p_ = 0;      // CP two-point
    double sigma_ = 0, nu_ = 0, theta_d_ = 0;          // VG
    double alpha_ = 0, c_minus_ = 0, c_plus_ = 0;      // stable
    double cgmy_c_ = 0, cgmy_g_ = 0, cgmy_m_ = 0, cgmy_y_ = 0;
};

} // namespace ecfid

#endif
