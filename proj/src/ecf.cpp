#include "ecfid/ecf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <vector>

#include <Eigen/Dense>

#include "ecfid/errors.hpp"
#include "ecfid/rng.hpp"

namespace ecfid {

namespace {

constexpr cxd kI{0.0, 1.0};

cxd cis(double x) { return {std::cos(x), std::sin(x)}; }

// Pairwise reduction over [lo, hi); base case runs a short linear sum.
cxd pairwise_sum(const std::vector<cxd>& v, std::size_t lo, std::size_t hi) {
    if (hi - lo <= 64) {
        cxd s{0.0, 0.0};
        for (std::size_t i = lo; i < hi; ++i) s += v[i];
        return s;
    }
    const std::size_t mid = lo + (hi - lo) / 2;
    return pairwise_sum(v, lo, mid) + pairwise_sum(v, mid, hi);
}

cxd pairwise_mean(const std::vector<cxd>& v) {
    if (v.empty()) throw ConfigError("pairwise_mean: empty input");
    return pairwise_sum(v, 0, v.size()) / static_cast<double>(v.size());
}

// Hermitian eigendecomposition with a floor check.
struct HermEig {
    Eigen::MatrixXcd vectors;
    Eigen::VectorXd values;
};

HermEig herm_eig(const Eigen::MatrixXcd& K) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(K);
    if (es.info() != Eigen::Success)
        throw Error("hermitian eigendecomposition failed");
    return {es.eigenvectors(), es.eigenvalues()};
}

void check_psd(const Eigen::VectorXd& eigs, double scale, const char* who) {
    const double floor = -1e-8 * std::max(scale, 1.0);
    if (eigs.minCoeff() < floor) {
        std::ostringstream os;
        os << who << ": weighting matrix has negative eigenvalue " << eigs.minCoeff();
        throw ConfigError(os.str());
    }
}

Eigen::MatrixXd realify(const Eigen::MatrixXcd& m, const char* who) {
    const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    const double resid = m.imag().cwiseAbs().maxCoeff();
    if (resid > 1e-8 * scale) {
        std::ostringstream os;
        os << who << ": imaginary residue " << resid
           << " exceeds tolerance; is the u-grid closed under negation?";
        throw std::logic_error(os.str());
    }
    // exact symmetrization of the real part
    Eigen::MatrixXd r = m.real();
    return 0.5 * (r + r.transpose());
}

} // namespace

// -------------------------------------------------------------------- UGrid

void UGrid::validate() const {
    if (r < 1) throw ConfigError("UGrid: r must be >= 1");
    if (points.rows() < 1) throw ConfigError("UGrid: need at least one point");
    if (points.cols() != r) throw ConfigError("UGrid: points must have r columns");
    const int m = size();
    for (int k = 0; k < m; ++k) {
        if (points.row(k).norm() == 0.0)
            throw ConfigError("UGrid: zero vector gives an identically-zero score");
        for (int l = k + 1; l < m; ++l)
            if ((points.row(k) - points.row(l)).norm() == 0.0)
                throw ConfigError("UGrid: points must be pairwise distinct");
    }
}

UGrid UGrid::scalar(std::span<const double> values) {
    UGrid g;
    g.r = 1;
    g.points.resize(static_cast<long>(values.size()), 1);
    for (std::size_t i = 0; i < values.size(); ++i)
        g.points(static_cast<long>(i), 0) = values[i];
    g.validate();
    return g;
}

UGrid make_scalar_grid(const std::function<cxd(double)>& phi, int m, double target_mod) {
    if (m < 2 || m % 2 != 0)
        throw ConfigError("make_scalar_grid: M must be even and >= 2");
    if (!(target_mod > 0.0 && target_mod < 1.0))
        throw ConfigError("make_scalar_grid: target_mod must lie in (0,1)");
    // Scan a geometric ladder for the first crossing of |phi| through
    // target_mod. Compound-Poisson-type c.f.s have inf |phi| = e^{-2 lambda h}
    // > 0, so the target can be unreachable; then the scan settles on the
    // argmin of |phi| instead (most informative available frequency).
    const double step = std::pow(2.0, 0.125);
    double u_max = 0.0;
    double best_u = 1e-3, best_mod = std::abs(phi(best_u));
    double prev_u = best_u;
    int rising = 0;
    for (double u = 1e-3 * step; u < 1e9; u *= step) {
        const double mod = std::abs(phi(u));
        if (mod <= target_mod) {
            // refine the crossing between prev_u and u
            double lo = prev_u, hi = u;
            for (int it = 0; it < 60; ++it) {
                const double mid = 0.5 * (lo + hi);
                (std::abs(phi(mid)) > target_mod ? lo : hi) = mid;
            }
            u_max = 0.5 * (lo + hi);
            break;
        }
        if (mod < best_mod) {
            best_mod = mod;
            best_u = u;
            rising = 0;
        } else if (++rising > 64) {
            break; // well past the global minimum of |phi|
        }
        prev_u = u;
    }
    if (u_max == 0.0) u_max = best_u;
    const int half = m / 2;
    UGrid g;
    g.r = 1;
    g.points.resize(m, 1);
    for (int j = 0; j < half; ++j) {
        const double u = u_max / std::pow(2.0, half - 1 - j);
        g.points(2 * j, 0) = u;
        g.points(2 * j + 1, 0) = -u;
    }
    g.validate();
    return g;
}

UGrid make_block_grid(int r, int m, double u_max, std::uint64_t seed) {
    if (r < 1) throw ConfigError("make_block_grid: r must be >= 1");
    if (m < 2 || m % 2 != 0)
        throw ConfigError("make_block_grid: M must be even and >= 2");
    if (!(u_max > 0.0)) throw ConfigError("make_block_grid: u_max must be > 0");
    UGrid g;
    g.r = r;
    g.seed = seed;
    g.points.resize(m, r);
    Rng rng(seed);
    const int half = m / 2;
    for (int k = 0; k < half; ++k) {
        for (;;) {
            Eigen::RowVectorXd row(r);
            for (int j = 0; j < r; ++j) row[j] = rng.uniform(-u_max, u_max);
            if (row.norm() == 0.0) continue;
            bool dup = false;
            for (int l = 0; l < k && !dup; ++l)
                if ((g.points.row(2 * l) - row).norm() == 0.0 ||
                    (g.points.row(2 * l + 1) - row).norm() == 0.0)
                    dup = true;
            if (dup) continue;
            g.points.row(2 * k) = row;
            g.points.row(2 * k + 1) = -row;
            break;
        }
    }
    g.validate();
    return g;
}

// ------------------------------------------------------------------- scores

cxd iid_score_known_cf(double sample, double u, const std::function<cxd(double)>& phi) {
    return cis(u * sample) - phi(u);
}

cxd simulated_score(std::span<const double> real_block,
                    std::span<const double> sim_block,
                    std::span<const double> u) {
    if (real_block.size() != u.size() || sim_block.size() != u.size())
        throw ConfigError("simulated_score: block/u dimension mismatch");
    double pr = 0.0, ps = 0.0;
    for (std::size_t j = 0; j < u.size(); ++j) {
        pr += u[j] * real_block[j];
        ps += u[j] * sim_block[j];
    }
    return cis(pr) - cis(ps);
}

ScoreSet average_scores(const Eigen::MatrixXcd& values) {
    if (values.rows() < 1) throw ConfigError("average_scores: N must be >= 1");
    ScoreSet s;
    s.values = values;
    s.n = values.rows();
    s.average.resize(values.cols());
    std::vector<cxd> col(static_cast<std::size_t>(values.rows()));
    for (long k = 0; k < values.cols(); ++k) {
        for (long n = 0; n < values.rows(); ++n)
            col[static_cast<std::size_t>(n)] = values(n, k);
        s.average[k] = pairwise_mean(col);
    }
    return s;
}

Eigen::VectorXcd ecf_scalar(std::span<const double> data, const Eigen::VectorXd& u_values) {
    if (data.empty()) throw ConfigError("ecf_scalar: empty data");
    Eigen::VectorXcd out(u_values.size());
    std::vector<cxd> buf(data.size());
    for (long k = 0; k < u_values.size(); ++k) {
        const double u = u_values[k];
        for (std::size_t n = 0; n < data.size(); ++n) buf[n] = cis(u * data[n]);
        out[k] = pairwise_mean(buf);
    }
    return out;
}

Eigen::VectorXcd ecf_blocks(const BlockSeries& blocks, const UGrid& grid) {
    if (blocks.r != grid.r) throw ConfigError("ecf_blocks: block length != grid r");
    const long n = blocks.count();
    if (n < 1) throw ConfigError("ecf_blocks: no blocks");
    Eigen::VectorXcd out(grid.size());
    std::vector<cxd> buf(static_cast<std::size_t>(n));
    for (int k = 0; k < grid.size(); ++k) {
        const Eigen::VectorXd u = grid.point(k);
        for (long i = 0; i < n; ++i)
            buf[static_cast<std::size_t>(i)] = cis(blocks.blocks.row(i).dot(u));
        out[k] = pairwise_mean(buf);
    }
    return out;
}

Eigen::MatrixXcd empirical_cov(const ScoreSet& scores) {
    const long n = scores.n;
    const long m = scores.values.cols();
    Eigen::MatrixXcd cov(m, m);
    std::vector<cxd> buf(static_cast<std::size_t>(n));
    for (long k = 0; k < m; ++k) {
        for (long l = k; l < m; ++l) {
            for (long i = 0; i < n; ++i)
                buf[static_cast<std::size_t>(i)] =
                    (scores.values(i, k) - scores.average[k]) *
                    std::conj(scores.values(i, l) - scores.average[l]);
            cov(k, l) = pairwise_mean(buf);
            cov(l, k) = std::conj(cov(k, l));
        }
    }
    return cov;
}

// ------------------------------------------------------------------ weights

WeightMatrix WeightMatrix::identity(int m) {
    WeightMatrix w;
    w.K = Eigen::MatrixXcd::Identity(m, m);
    w.eps = 0.0;
    return w;
}

double default_reg_eps(const Eigen::MatrixXcd& K) {
    return 1e-10 * K.real().trace() / static_cast<double>(K.rows());
}

WeightMatrix regularized(Eigen::MatrixXcd K) {
    WeightMatrix w;
    w.eps = default_reg_eps(K);
    w.K = std::move(K);
    return w;
}

WeightMatrix theory_cov_C(const std::function<cxd(double)>& phi, const UGrid& grid) {
    if (grid.r != 1) throw ConfigError("theory_cov_C: requires a scalar grid (r = 1)");
    const int m = grid.size();
    WeightMatrix w;
    w.K.resize(m, m);
    for (int k = 0; k < m; ++k) {
        const double uk = grid.points(k, 0);
        for (int l = 0; l < m; ++l) {
            const double ul = grid.points(l, 0);
            w.K(k, l) = phi(uk - ul) - phi(uk) * phi(-ul);
        }
    }
    return w;
}

WeightMatrix theory_cov_Lambda(const std::function<cxd(const Eigen::VectorXd&)>& joint_phi,
                               const UGrid& grid) {
    const int m = grid.size();
    WeightMatrix w;
    w.K.resize(m, m);
    std::vector<cxd> phis(static_cast<std::size_t>(m)), phis_neg(static_cast<std::size_t>(m));
    for (int k = 0; k < m; ++k) {
        phis[static_cast<std::size_t>(k)] = joint_phi(grid.point(k));
        phis_neg[static_cast<std::size_t>(k)] = joint_phi(-grid.point(k));
    }
    for (int k = 0; k < m; ++k)
        for (int l = 0; l < m; ++l) {
            const cxd cross = k == l ? cxd{1.0, 0.0}
                                     : joint_phi(grid.point(k) - grid.point(l));
            w.K(k, l) = cross - phis[static_cast<std::size_t>(k)] *
                                    phis_neg[static_cast<std::size_t>(l)];
        }
    // symmetrize away rounding asymmetry
    w.K = 0.5 * (w.K + w.K.adjoint()).eval();
    return w;
}

WeightMatrix doubled(const WeightMatrix& w) {
    WeightMatrix out;
    out.K = 2.0 * w.K;
    out.eps = 2.0 * w.eps;
    return out;
}

double weighted_cost(const Eigen::VectorXcd& hbar, const WeightMatrix& K) {
    const auto eig = herm_eig(K.K);
    const double scale = eig.values.cwiseAbs().maxCoeff();
    check_psd(eig.values, scale, "weighted_cost");
    const Eigen::VectorXcd y = eig.vectors.adjoint() * hbar;
    double cost = 0.0;
    for (long i = 0; i < y.size(); ++i) {
        const double d = eig.values[i] + K.eps;
        if (d <= 0.0) throw ConfigError("weighted_cost: K + eps I not positive definite");
        cost += std::norm(y[i]) / d;
    }
    return cost;
}

double weighted_cost(const ScoreSet& scores, const WeightMatrix& K) {
    return weighted_cost(scores.average, K);
}

Eigen::VectorXd whitened_residual(const Eigen::VectorXcd& hbar, const WeightMatrix& K) {
    const auto eig = herm_eig(K.K);
    const double scale = eig.values.cwiseAbs().maxCoeff();
    check_psd(eig.values, scale, "whitened_residual");
    const Eigen::VectorXcd y = eig.vectors.adjoint() * hbar;
    Eigen::VectorXd res(2 * y.size());
    for (long i = 0; i < y.size(); ++i) {
        const double d = eig.values[i] + K.eps;
        if (d <= 0.0) throw ConfigError("whitened_residual: K + eps I not positive definite");
        const double w = 1.0 / std::sqrt(d);
        res[2 * i] = w * y[i].real();
        res[2 * i + 1] = w * y[i].imag();
    }
    return res;
}

// ----------------------------------------------------------------- joint cf

namespace {

// Geometric envelope |v_k| <= vbar * rho^(k - k0) for the tail of v = h * u.
struct TailEnvelope {
    double rho;
    double coef; // |v_k| <= coef * rho^k for k > k_support (FIR: zero tail)
    int k_support;
};

TailEnvelope v_envelope(const SystemModel& sys, const Eigen::VectorXd& u, int probe_len) {
    TailEnvelope env{};
    env.rho = sys.spectral_radius();
    const int r = static_cast<int>(u.size());
    if (env.rho < 1e-12) {
        env.k_support = sys.state_dim() + r; // v_k = 0 beyond support
        env.coef = 0.0;
        return env;
    }
    const double u_l1 = u.cwiseAbs().sum();
    const auto h = sys.impulse_response(probe_len);
    double c_env = 0.0;
    for (int l = std::max(1, probe_len / 2); l <= probe_len; ++l) {
        const double mag = std::abs(h[static_cast<std::size_t>(l)]);
        if (mag > 0.0) c_env = std::max(c_env, mag / std::pow(env.rho, l));
    }
    if (c_env == 0.0) c_env = std::abs(sys.d()) + sys.b().norm() * sys.c().norm();
    // |v_k| <= ||u||_1 max_{l in [k-r, k-1]} |h_l| <= ||u||_1 c_env rho^{k-r}
    env.coef = u_l1 * c_env * std::pow(env.rho, -r);
    env.k_support = 0;
    return env;
}

} // namespace

cxd joint_cf_truncated(const SystemModel& sys, const NoiseModel& noise,
                       const Eigen::VectorXd& u, int k_max) {
    if (k_max < 0) throw ConfigError("joint_cf_truncated: k_max must be >= 0");
    const auto h = sys.impulse_response(std::max(0, k_max - 1));
    const auto v = convolve_u(h, std::span<const double>(u.data(),
                                                         static_cast<std::size_t>(u.size())),
                              k_max);
    cxd prod{1.0, 0.0};
    for (double vk : v)
        if (vk != 0.0) prod *= noise.char_fn_increment(vk);
    return prod;
}

JointCfResult joint_cf(const SystemModel& sys, const NoiseModel& noise,
                       const Eigen::VectorXd& u, double tol) {
    if (!(tol > 0.0)) throw ConfigError("joint_cf: tol must be > 0");
    if (u.size() < 1) throw ConfigError("joint_cf: empty u");
    if (u.norm() == 0.0) return {cxd{1.0, 0.0}, 0};

    const int r = static_cast<int>(u.size());
    const int m = sys.state_dim();

    if (sys.spectral_radius() < 1e-12) {
        // finite product, no tail
        const int k_max = m + r;
        return {joint_cf_truncated(sys, noise, u, k_max), k_max};
    }

    const int probe = std::max({2 * m + r, 32, sys.warmup_length(1e-6) / 4});
    const TailEnvelope env = v_envelope(sys, u, probe);
    const double rho = env.rho;

    int k_max = std::max(probe, m + r);
    for (int grow = 0; grow < 64; ++grow) {
        const double v_start = env.coef * std::pow(rho, k_max + 1);
        const LogCfBound bound = noise.log_cf_bound(std::max(v_start, 1e-300));
        if (v_start <= bound.v_valid) {
            // sum_{k>k_max} |h psi(v_k)| <= sum_i c_i (coef rho^{k+1})^{p_i} geometric
            double tail = 0.0;
            for (const auto& [coef_i, p_i] : bound.terms) {
                const double rr = std::pow(rho, p_i);
                tail += coef_i * std::pow(v_start, p_i) / (1.0 - rr);
            }
            if (std::expm1(tail) < tol)
                return {joint_cf_truncated(sys, noise, u, k_max), k_max};
        }
        k_max *= 2;
        if (k_max > (1 << 26))
            throw Error("joint_cf: tail bound failed to converge (stable system expected)");
    }
    throw Error("joint_cf: tail bound failed to converge");
}

JointCfEvaluator::JointCfEvaluator(SystemModel sys, NoiseModel noise, double tol)
    : sys_(std::move(sys)), noise_(std::move(noise)), tol_(tol) {}

cxd JointCfEvaluator::operator()(const Eigen::VectorXd& u) const {
    return joint_cf(sys_, noise_, u, tol_).value;
}

// -------------------------------------------------------------- sensitivity

Sensitivity sensitivity_matrix(
    const std::function<cxd(const Eigen::VectorXd&, const Eigen::VectorXd&)>& phi,
    const UGrid& grid, const Eigen::VectorXd& at, double fd_step) {
    if (!(fd_step > 0.0))
        throw ConfigError("sensitivity_matrix: finite-difference step must be > 0");
    const int m = grid.size();
    const int p = static_cast<int>(at.size());
    Sensitivity s;
    s.rows.resize(m, p);
    s.richardson_err.resize(m, p);
    for (int i = 0; i < p; ++i) {
        const double step = fd_step * std::max(1.0, std::abs(at[i]));
        for (int k = 0; k < m; ++k) {
            const Eigen::VectorXd u = grid.point(k);
            auto central = [&](double hh) {
                Eigen::VectorXd lo = at, hi = at;
                hi[i] += hh;
                lo[i] -= hh;
                return (phi(u, hi) - phi(u, lo)) / (2.0 * hh);
            };
            const cxd d_full = central(step);
            const cxd d_half = central(0.5 * step);
            // Richardson: eliminate the O(h^2) term, report the stencil gap.
            const cxd d = (4.0 * d_half - d_full) / 3.0;
            s.rows(k, i) = -d;
            s.richardson_err(k, i) = std::abs(d_full - d_half);
        }
    }
    return s;
}

// ------------------------------------------------------- covariance algebra

namespace {

// K^{-1/2} H with the ridge applied; also enforces the rank condition.
Eigen::MatrixXcd whiten_and_check(const Eigen::MatrixXcd& H, const WeightMatrix& K,
                                  const char* who) {
    const auto eig = herm_eig(K.K);
    check_psd(eig.values, eig.values.cwiseAbs().maxCoeff(), who);
    Eigen::VectorXd inv_sqrt(eig.values.size());
    for (long i = 0; i < eig.values.size(); ++i) {
        const double d = eig.values[i] + K.eps;
        if (d <= 0.0) throw ConfigError(std::string(who) + ": weight not PD after ridge");
        inv_sqrt[i] = 1.0 / std::sqrt(d);
    }
    Eigen::MatrixXcd wh = inv_sqrt.asDiagonal() * (eig.vectors.adjoint() * H);
    Eigen::JacobiSVD<Eigen::MatrixXcd> svd(wh, Eigen::ComputeThinV);
    const auto& sv = svd.singularValues();
    if (sv.size() == 0 || sv[sv.size() - 1] < 1e-6 * sv[0]) {
        const Eigen::VectorXcd dir = svd.matrixV().col(sv.size() - 1);
        std::vector<double> direction(static_cast<std::size_t>(dir.size()));
        for (long i = 0; i < dir.size(); ++i)
            direction[static_cast<std::size_t>(i)] = dir[i].real();
        std::ostringstream os;
        os << who << ": sensitivity rank deficient (sigma_min/sigma_max = "
           << (sv.size() ? sv[sv.size() - 1] / sv[0] : 0.0) << "); null direction ~ [";
        for (std::size_t i = 0; i < direction.size(); ++i)
            os << (i ? ", " : "") << direction[i];
        os << "]";
        throw IdentifiabilityError(os.str(), direction);
    }
    return wh;
}

} // namespace

Eigen::MatrixXd asymptotic_cov(const Eigen::MatrixXcd& H, const WeightMatrix& Lambda,
                               double factor) {
    if (factor != 1.0 && factor != 2.0)
        throw ConfigError("asymptotic_cov: factor must be 1 or 2");
    const Eigen::MatrixXcd wh = whiten_and_check(H, Lambda, "asymptotic_cov");
    const Eigen::MatrixXcd t = wh.adjoint() * wh; // H^* Lambda^{-1} H
    const Eigen::MatrixXcd cov = factor * t.inverse();
    return realify(cov, "asymptotic_cov");
}

Eigen::MatrixXd sandwich_cov(const Eigen::MatrixXcd& H, const WeightMatrix& K,
                             const WeightMatrix& Lambda, double factor) {
    const Eigen::MatrixXcd wh = whiten_and_check(H, K, "sandwich_cov");
    const auto eig = herm_eig(K.K);
    Eigen::VectorXd inv_sqrt(eig.values.size());
    for (long i = 0; i < eig.values.size(); ++i)
        inv_sqrt[i] = 1.0 / std::sqrt(eig.values[i] + K.eps);
    // K^{-1/2} (Lambda + eps I) K^{-1/2} in the same basis as wh; including
    // Lambda's ridge keeps the collapse at K = Lambda exact
    Eigen::MatrixXcd lam_mid = eig.vectors.adjoint() * Lambda.K * eig.vectors;
    lam_mid.diagonal().array() += Lambda.eps;
    const Eigen::MatrixXcd lam_w =
        inv_sqrt.asDiagonal() * lam_mid * inv_sqrt.asDiagonal();
    const Eigen::MatrixXcd t_inv = (wh.adjoint() * wh).inverse();
    const Eigen::MatrixXcd cov =
        factor * t_inv * wh.adjoint() * lam_w * wh * t_inv;
    return realify(cov, "sandwich_cov");
}

} // namespace ecfid
