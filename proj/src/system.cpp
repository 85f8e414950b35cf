#include "ecfid/system.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "ecfid/errors.hpp"

namespace ecfid {

int SystemSpec::theta_size() const {
    switch (structure) {
    case SystemStructure::Fir:        return static_cast<int>(theta.size());
    case SystemStructure::Arma:       return p_a + p_b;
    case SystemStructure::StateSpace: return dim * dim + 2 * dim + 1;
    }
    return 0;
}

SystemModel SystemModel::fir(const Eigen::VectorXd& coeffs, double margin) {
    if (coeffs.size() < 1) throw ConfigError("fir: need at least one coefficient");
    SystemModel m;
    m.spec_.structure = SystemStructure::Fir;
    m.spec_.theta = coeffs;
    m.realize_and_check(margin);
    return m;
}

SystemModel SystemModel::arma(int p_a, int p_b, const Eigen::VectorXd& theta,
                              double margin) {
    if (p_a < 0 || p_b < 0 || p_a + p_b < 1)
        throw ConfigError("arma: orders must be non-negative with p_a + p_b >= 1");
    if (theta.size() != p_a + p_b) {
        std::ostringstream os;
        os << "arma: theta has " << theta.size() << " entries, expected " << p_a + p_b;
        throw ConfigError(os.str());
    }
    SystemModel m;
    m.spec_.structure = SystemStructure::Arma;
    m.spec_.p_a = p_a;
    m.spec_.p_b = p_b;
    m.spec_.theta = theta;
    m.realize_and_check(margin);
    return m;
}

SystemModel SystemModel::state_space(int dim, const Eigen::VectorXd& theta,
                                     double margin) {
    if (dim < 1) throw ConfigError("state_space: dim must be >= 1");
    if (theta.size() != dim * dim + 2 * dim + 1) {
        std::ostringstream os;
        os << "state_space: theta has " << theta.size() << " entries, expected "
           << dim * dim + 2 * dim + 1;
        throw ConfigError(os.str());
    }
    SystemModel m;
    m.spec_.structure = SystemStructure::StateSpace;
    m.spec_.dim = dim;
    m.spec_.theta = theta;
    m.realize_and_check(margin);
    return m;
}

SystemModel SystemModel::build(const SystemSpec& spec, double margin) {
    switch (spec.structure) {
    case SystemStructure::Fir:        return fir(spec.theta, margin);
    case SystemStructure::Arma:       return arma(spec.p_a, spec.p_b, spec.theta, margin);
    case SystemStructure::StateSpace: return state_space(spec.dim, spec.theta, margin);
    }
    throw ConfigError("build: unknown structure");
}

void SystemModel::realize_and_check(double margin) {
    const Eigen::VectorXd& th = spec_.theta;
    for (int i = 0; i < th.size(); ++i)
        if (!std::isfinite(th[i])) throw ConfigError("system: theta must be finite");

    switch (spec_.structure) {
    case SystemStructure::Fir: {
        // Delay line: state holds (u_{n-1},...,u_{n-m}); nilpotent A.
        const int m = static_cast<int>(th.size()) - 1;
        a_.setZero(m, m);
        for (int i = 1; i < m; ++i) a_(i, i - 1) = 1.0;
        b_.setZero(m);
        if (m > 0) b_[0] = 1.0;
        c_ = th.tail(m);
        d_ = th[0];
        rho_ = 0.0;
        return; // always pole-stable; zeros never checked
    }
    case SystemStructure::Arma: {
        const int pa = spec_.p_a, pb = spec_.p_b;
        const int m = std::max(pa, pb);
        Eigen::VectorXd a_coef = Eigen::VectorXd::Zero(m);
        Eigen::VectorXd b_coef = Eigen::VectorXd::Zero(m);
        a_coef.head(pa) = th.head(pa);
        b_coef.head(pb) = th.tail(pb);
        // Controller canonical form of (z^m + sum b_j z^{m-j}) / (z^m - sum a_j z^{m-j}).
        a_.setZero(m, m);
        a_.row(0) = a_coef.transpose();
        for (int i = 1; i < m; ++i) a_(i, i - 1) = 1.0;
        b_.setZero(m);
        b_[0] = 1.0;
        c_ = b_coef + a_coef;
        d_ = 1.0;
        break;
    }
    case SystemStructure::StateSpace: {
        const int m = spec_.dim;
        a_.resize(m, m);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) a_(i, j) = th[i * m + j];
        b_ = th.segment(m * m, m);
        c_ = th.segment(m * m + m, m);
        d_ = th[m * m + 2 * m];
        break;
    }
    }

    // Pole stability with a numerical margin; zeros are unconstrained.
    Eigen::EigenSolver<Eigen::MatrixXd> es(a_, /*computeEigenvectors=*/false);
    const auto ev = es.eigenvalues();
    rho_ = 0.0;
    std::vector<double> offending;
    for (int i = 0; i < ev.size(); ++i) {
        const double mod = std::abs(ev[i]);
        rho_ = std::max(rho_, mod);
        if (mod >= 1.0 - margin) offending.push_back(mod);
    }
    if (!offending.empty()) {
        std::ostringstream os;
        os << "system: unstable poles, |pole| =";
        for (double m : offending) os << ' ' << m;
        os << " (limit " << 1.0 - margin << ")";
        throw ConfigError(os.str());
    }
}

std::vector<double> SystemModel::impulse_response(int L) const {
    if (L < 0) throw ConfigError("impulse_response: L must be >= 0");
    std::vector<double> h(static_cast<std::size_t>(L) + 1);
    h[0] = d_;
    Eigen::VectorXd x = b_;
    for (int l = 1; l <= L; ++l) {
        h[static_cast<std::size_t>(l)] = c_.dot(x);
        if (l < L) x = a_ * x;
    }
    return h;
}

double SystemModel::impulse_tail_bound(int L) const {
    const int m = state_dim();
    if (rho_ < 1e-12) {
        // FIR (or nilpotent A): support ends at lag m exactly.
        if (L >= m) return 0.0;
        const auto h = impulse_response(m);
        double s = 0.0;
        for (int l = L + 1; l <= m; ++l) s += std::abs(h[static_cast<std::size_t>(l)]);
        return s;
    }
    // Envelope |h_l| <= c_env rho^l fitted on a trailing window, then the
    // geometric tail. An estimate, not a hard bound, as documented.
    const int fit_lo = std::max(1, L / 2);
    const auto h = impulse_response(L);
    double c_env = 0.0;
    for (int l = fit_lo; l <= L; ++l) {
        const double mag = std::abs(h[static_cast<std::size_t>(l)]);
        if (mag > 0.0) c_env = std::max(c_env, mag / std::pow(rho_, l));
    }
    if (c_env == 0.0) {
        // window was all zero; fall back to a norm-based envelope
        c_env = std::abs(d_) + b_.norm() * c_.norm();
    }
    return c_env * std::pow(rho_, L + 1) / (1.0 - rho_);
}

std::vector<double> SystemModel::filter(std::span<const double> input, int warmup) const {
    if (warmup < 0) throw ConfigError("filter: warmup must be >= 0");
    const long n_in = static_cast<long>(input.size());
    const long n_out = n_in - warmup;
    if (n_out < 1)
        throw ConfigError("filter: input shorter than warmup + 1");
    std::vector<double> out(static_cast<std::size_t>(n_out));
    Eigen::VectorXd x = Eigen::VectorXd::Zero(state_dim());
    for (long n = 0; n < n_in; ++n) {
        const double u = input[static_cast<std::size_t>(n)];
        const double y = c_.dot(x) + d_ * u;
        if (n >= warmup) out[static_cast<std::size_t>(n - warmup)] = y;
        x = a_ * x;
        x.noalias() += b_ * u;
    }
    return out;
}

int SystemModel::warmup_length(double eps_tail) const {
    const int m = state_dim();
    if (rho_ < 1e-12) return m; // exact for FIR
    const double len = std::log(eps_tail) / std::log(rho_);
    return std::max<int>(m, static_cast<int>(std::ceil(len)));
}

BlockSeries make_blocks(std::span<const double> series, int r) {
    if (r < 1) throw ConfigError("make_blocks: r must be >= 1");
    const long len = static_cast<long>(series.size());
    const long n = len - r;
    if (n < 1) throw ConfigError("make_blocks: series too short for block length r");
    BlockSeries bs;
    bs.r = r;
    bs.blocks.resize(n, r);
    // Block for time index n = r+1+i is (dy_{n-1}, ..., dy_{n-r}),
    // most recent sample first.
    for (long i = 0; i < n; ++i)
        for (int j = 0; j < r; ++j)
            bs.blocks(i, j) = series[static_cast<std::size_t>(r + i - 1 - j)];
    return bs;
}

std::vector<double> convolve_u(std::span<const double> h, std::span<const double> u,
                               int k_max) {
    if (k_max < 0) throw ConfigError("convolve_u: k_max must be >= 0");
    const int r = static_cast<int>(u.size());
    const int h_len = static_cast<int>(h.size());
    std::vector<double> v(static_cast<std::size_t>(k_max), 0.0);
    for (int k = 1; k <= k_max; ++k) {
        double s = 0.0;
        for (int j = 1; j <= r; ++j) {
            const int l = k - j;
            if (l >= 0 && l < h_len) s += h[static_cast<std::size_t>(l)] * u[static_cast<std::size_t>(j - 1)];
        }
        v[static_cast<std::size_t>(k - 1)] = s;
    }
    return v;
}

} // namespace ecfid
