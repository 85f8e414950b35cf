#ifndef ECFID_SYSTEM_HPP
#define ECFID_SYSTEM_HPP

#include <span>
#include <vector>

#include <Eigen/Core>

namespace ecfid {

enum class SystemStructure { Fir, Arma, StateSpace };

/// Structure tag plus full parameter vector; the template from which
/// SystemModel instances are built. For Arma, theta packs
/// (a_1..a_{p_a}, b_1..b_{p_b}); for StateSpace(dim m), theta packs
/// (vec_rowmajor(A), b, c, d) of length m^2 + 2m + 1.
struct SystemSpec {
    SystemStructure structure = SystemStructure::Fir;
    int p_a = 0;
    int p_b = 0;
    int dim = 0;
    Eigen::VectorXd theta;

    int theta_size() const;
};

/// A stable, rational, causal SISO filter A(theta, q^{-1}) with a
/// state-space realization whose matrices are polynomial in theta.
///
/// Conventions (pinned here and in the docs):
///   Fir:   A = theta_0 + theta_1 q^{-1} + ... + theta_{p-1} q^{-(p-1)}
///   Arma:  A = (1 + b_1 q^{-1} + ... + b_{p_b} q^{-p_b})
///            / (1 - a_1 q^{-1} - ... - a_{p_a} q^{-p_a})
///          so Arma(1,0) with a_1 = 0.5 has pole 0.5 and impulse response 0.5^l.
///
/// Only pole stability is enforced (spectral radius < 1 - margin); zeros are
/// deliberately unconstrained, so non-minimum-phase parameterizations are
/// accepted.
class SystemModel {
public:
    static SystemModel fir(const Eigen::VectorXd& coeffs, double margin = 1e-6);
    static SystemModel arma(int p_a, int p_b, const Eigen::VectorXd& theta,
                            double margin = 1e-6);
    static SystemModel state_space(int dim, const Eigen::VectorXd& theta,
                                   double margin = 1e-6);
    static SystemModel build(const SystemSpec& spec, double margin = 1e-6);

    const SystemSpec& spec() const { return spec_; }
    int state_dim() const { return static_cast<int>(a_.rows()); }
    double spectral_radius() const { return rho_; }
    bool is_fir() const { return spec_.structure == SystemStructure::Fir; }

    /// Realization matrices x_{n+1} = A x_n + b u_n, y_n = c^T x_n + d u_n.
    const Eigen::MatrixXd& A() const { return a_; }
    const Eigen::VectorXd& b() const { return b_; }
    const Eigen::VectorXd& c() const { return c_; }
    double d() const { return d_; }

    /// Markov parameters h_0 .. h_L.
    std::vector<double> impulse_response(int L) const;

    /// Geometric-extrapolation estimate of sum_{l>L} |h_l| (exact 0 for FIR
    /// once L covers the support).
    double impulse_tail_bound(int L) const;

    /// Outputs of the causal filter with the first `warmup` outputs dropped,
    /// approximating the doubly-infinite stationary regime.
    std::vector<double> filter(std::span<const double> input, int warmup) const;

    /// Warmup length making the truncated-past contribution < eps_tail.
    int warmup_length(double eps_tail = 1e-12) const;

private:
    SystemModel() = default;
    void realize_and_check(double margin);

    SystemSpec spec_;
    Eigen::MatrixXd a_;
    Eigen::VectorXd b_, c_;
    double d_ = 0.0;
    double rho_ = 0.0;
};

/// Sliding-window blocks DY^r_n = (dy_{n-1}, ..., dy_{n-r}) for
/// n = r+1 .. N+r; row i of `blocks` holds the block for n = r+1+i.
struct BlockSeries {
    int r = 0;
    Eigen::MatrixXd blocks; // N x r
    long count() const { return blocks.rows(); }
};

BlockSeries make_blocks(std::span<const double> series, int r);

/// v_k = sum_{j=1}^{r} h_{k-j} u_j for k = 1..k_max, with h_l = 0 for l < 0
/// and beyond the given range.
std::vector<double> convolve_u(std::span<const double> h, std::span<const double> u,
                               int k_max);

} // namespace ecfid

#endif
