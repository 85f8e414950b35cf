#include "ecfid/harness.hpp"

#include <atomic>
#include <cmath>
#include <filesystem>
#include <sstream>
#include <thread>

#include "ecfid/errors.hpp"
#include "ecfid/rng.hpp"

namespace ecfid {

namespace fs = std::filesystem;

RepSeeds replication_seeds(std::uint64_t master, std::uint64_t rep) {
    const std::uint64_t rep_seed = seed_split(master, rep);
    return {seed_split(rep_seed, 0), seed_split(rep_seed, 1), seed_split(rep_seed, 2)};
}

// ----------------------------------------------------------------- families

int IidFamily::free_count() const {
    return kind == "gauss_shift" ? 1 : static_cast<int>(free_indices.size());
}

Eigen::VectorXd IidFamily::truth() const {
    if (kind == "gauss_shift") {
        Eigen::VectorXd v(1);
        v[0] = shift_eta;
        return v;
    }
    const Eigen::VectorXd eta = model->eta();
    Eigen::VectorXd v(static_cast<long>(free_indices.size()));
    for (std::size_t i = 0; i < free_indices.size(); ++i)
        v[static_cast<long>(i)] = eta[free_indices[i]];
    return v;
}

std::function<cxd(double, const Eigen::VectorXd&)> IidFamily::phi() const {
    if (kind == "gauss_shift") {
        const double s0 = shift_sigma0;
        return [s0](double u, const Eigen::VectorXd& eta) {
            return std::exp(cxd(-0.5 * s0 * s0 * u * u, u * eta[0]));
        };
    }
    const NoiseModel base = *model;
    const std::vector<int> idx = free_indices;
    return [base, idx](double u, const Eigen::VectorXd& free_values) {
        Eigen::VectorXd eta = base.eta();
        for (std::size_t i = 0; i < idx.size(); ++i) eta[idx[i]] = free_values[static_cast<long>(i)];
        return base.with_eta(eta).char_fn_increment(u);
    };
}

std::vector<double> IidFamily::sample(long n, std::uint64_t seed,
                                      const Eigen::VectorXd& free_values) const {
    if (kind == "gauss_shift") {
        std::vector<double> out(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i) {
            Rng rng = sample_rng(seed, static_cast<std::uint64_t>(i));
            out[static_cast<std::size_t>(i)] = free_values[0] + shift_sigma0 * rng.normal();
        }
        return out;
    }
    Eigen::VectorXd eta = model->eta();
    for (std::size_t i = 0; i < free_indices.size(); ++i)
        eta[free_indices[i]] = free_values[static_cast<long>(i)];
    return model->with_eta(eta).sample_increments(n, seed);
}

std::function<double(double, const Eigen::VectorXd&)> IidFamily::mechanism() const {
    if (kind != "gauss_shift")
        throw ConfigError("iid family: mechanism form only available for gauss_shift");
    const double s0 = shift_sigma0;
    return [s0](double rho, const Eigen::VectorXd& eta) { return eta[0] + s0 * rho; };
}

std::function<std::vector<double>(long, std::uint64_t)> IidFamily::rho_sampler() const {
    return [](long n, std::uint64_t seed) {
        std::vector<double> out(static_cast<std::size_t>(n));
        for (long i = 0; i < n; ++i)
            out[static_cast<std::size_t>(i)] = sample_rng(seed, static_cast<std::uint64_t>(i)).normal();
        return out;
    };
}

IidFamily iid_family_from_json(const json& cfg) {
    IidFamily fam;
    if (!cfg.contains("kind") || !cfg["kind"].is_string())
        throw ConfigError("iid family: missing \"kind\"");
    fam.kind = cfg["kind"].get<std::string>();
    if (fam.kind == "gauss_shift") {
        fam.shift_eta = cfg.value("eta", 0.0);
        fam.shift_sigma0 = cfg.value("sigma0", 1.0);
        if (!(fam.shift_sigma0 > 0.0))
            throw ConfigError("gauss_shift: sigma0 must be > 0");
        return fam;
    }
    if (fam.kind == "noise_increments") {
        if (!cfg.contains("model")) throw ConfigError("noise_increments: missing \"model\"");
        fam.model = noise_from_json(cfg["model"]);
        if (!cfg.contains("free") || !cfg["free"].is_array() || cfg["free"].empty())
            throw ConfigError("noise_increments: missing \"free\" parameter-name list");
        const auto names = noise_param_names(*fam.model);
        for (const auto& name : cfg["free"]) {
            const auto it = names.find(name.get<std::string>());
            if (it == names.end())
                throw ConfigError("noise_increments: unknown free parameter \"" +
                                  name.get<std::string>() + '"');
            fam.free_indices.push_back(it->second);
        }
        return fam;
    }
    throw ConfigError("iid family: unknown kind \"" + fam.kind + '"');
}

// -------------------------------------------------------------------- grids

namespace {

UGrid resolve_grid_impl(const json& cfg, const std::function<cxd(double)>& phi, int r) {
    if (cfg.contains("points")) return grid_from_json(cfg);
    if (!cfg.contains("auto"))
        throw ConfigError("grid: need \"points\" or \"auto\"");
    const json& a = cfg["auto"];
    const int m = a.value("m", r == 1 ? 8 : 6);
    if (r == 1) {
        const double target = a.value("target_mod", 0.1);
        return make_scalar_grid(phi, m, target);
    }
    double u_max;
    if (a.contains("u_max")) {
        u_max = a["u_max"].get<double>();
    } else {
        // scale from the marginal c.f. the same way the scalar ladder does
        const UGrid ladder = make_scalar_grid(phi, 2, a.value("target_mod", 0.1));
        u_max = ladder.points.col(0).cwiseAbs().maxCoeff();
    }
    const std::uint64_t seed = a.value("seed", std::uint64_t{20240901});
    return make_block_grid(r, m, u_max, seed);
}

} // namespace

UGrid resolve_scalar_grid(const json& cfg, const std::function<cxd(double)>& phi) {
    UGrid g = resolve_grid_impl(cfg, phi, 1);
    if (g.r != 1) throw ConfigError("grid: expected r = 1");
    return g;
}

UGrid resolve_block_grid(const json& cfg, const std::function<cxd(double)>& marginal_phi) {
    const int r = cfg.contains("points") ? cfg["r"].get<int>() : cfg.value("r", 1);
    return resolve_grid_impl(cfg, marginal_phi, r);
}

// ----------------------------------------------------------------- simulate

namespace {

std::vector<double> simulate_series(const json& cfg, std::uint64_t seed) {
    if (!cfg.contains("noise")) throw ConfigError("simulate: missing \"noise\"");
    const NoiseModel noise = noise_from_json(cfg["noise"]);
    if (!cfg.contains("n")) throw ConfigError("simulate: missing \"n\"");
    const long n = cfg["n"].get<long>();
    if (n < 1) throw ConfigError("simulate: n must be >= 1");
    if (!cfg.contains("system") || cfg["system"].is_null())
        return noise.sample_increments(n, seed);
    const SystemModel sys = SystemModel::build(system_spec_from_json(cfg["system"]));
    const int warmup = sys.warmup_length();
    const std::vector<double> incs = noise.sample_increments(n + warmup, seed);
    return sys.filter(incs, warmup);
}

} // namespace

json run_simulate(const json& cfg, const std::string& out_path) {
    json canon = cfg;
    if (!canon.contains("seed")) throw ConfigError("simulate: missing \"seed\"");
    const std::uint64_t seed = canon["seed"].get<std::uint64_t>();
    const std::vector<double> series = simulate_series(canon, seed);
    const std::uint64_t hash = config_hash(canon);
    write_series_csv(out_path, series,
                     {{"ecfid", "simulate v1"},
                      {"config", canon.dump()},
                      {"config_hash", hash_string(hash)},
                      {"seed", std::to_string(seed)},
                      {"n", std::to_string(series.size())}});
    json meta;
    meta["path"] = out_path;
    meta["config_hash"] = hash_string(hash);
    meta["seed"] = seed;
    meta["n"] = series.size();
    return meta;
}

// ----------------------------------------------------------------- estimate

namespace {

Box box_from_json(const json& cfg) {
    if (!cfg.contains("domain")) throw ConfigError("problem: missing \"domain\"");
    Box b;
    b.lo = vector_from_json(cfg["domain"]["lo"]);
    b.hi = vector_from_json(cfg["domain"]["hi"]);
    b.validate();
    return b;
}

Weighting weighting_from_json(const json& cfg) {
    Weighting w;
    const std::string kind = cfg.value("weighting", "two_stage");
    if (kind == "two_stage")
        w.kind = WeightingKind::TwoStage;
    else if (kind == "identity")
        w.kind = WeightingKind::IdentityOnly;
    else
        throw ConfigError("weighting must be \"two_stage\" or \"identity\"");
    return w;
}

OptimOptions optim_from_json(const json& cfg, std::uint64_t opt_seed) {
    OptimOptions o;
    if (cfg.contains("optimizer")) {
        const json& j = cfg["optimizer"];
        o.max_iter = j.value("max_iter", o.max_iter);
        o.multistart = j.value("multistart", o.multistart);
        o.polish = j.value("polish", o.polish);
        o.gn_max_iter = j.value("gn_max_iter", o.gn_max_iter);
    }
    o.seed = opt_seed;
    return o;
}

struct EstimatorRun {
    EstimationResult result;
    UGrid grid;
};

// Build and run the configured estimator on `data`.
EstimatorRun run_estimator_on(const json& cfg, const std::vector<double>& data,
                              std::uint64_t sim_seed, std::uint64_t opt_seed) {
    if (!cfg.contains("estimator") || !cfg["estimator"].is_string())
        throw ConfigError("estimate: missing \"estimator\"");
    const std::string estimator = cfg["estimator"].get<std::string>();

    EstimatorRun run;
    if (estimator == "iid_known_cf" || estimator == "iid_simulated") {
        if (!cfg.contains("family")) throw ConfigError("estimate: missing \"family\"");
        const IidFamily fam = iid_family_from_json(cfg["family"]);
        const Eigen::VectorXd truth = fam.truth();
        auto phi_start = [&](double u) { return fam.phi()(u, truth); };
        if (!cfg.contains("grid")) throw ConfigError("estimate: missing \"grid\"");
        run.grid = resolve_scalar_grid(cfg["grid"], phi_start);
        if (estimator == "iid_known_cf") {
            IidKnownCfProblem p;
            p.data = data;
            p.phi = fam.phi();
            p.grid = run.grid;
            p.domain = box_from_json(cfg);
            p.start = cfg.contains("start") ? vector_from_json(cfg["start"])
                                            : ((p.domain.lo + p.domain.hi) / 2.0).eval();
            p.weighting = weighting_from_json(cfg);
            p.opt = optim_from_json(cfg, opt_seed);
            run.result = estimate_iid_known_cf(p);
        } else {
            IidSimulatedProblem p;
            p.data = data;
            p.mechanism = fam.mechanism();
            p.rho_sampler = fam.rho_sampler();
            p.n_sim = cfg.value("n_sim", static_cast<long>(data.size()));
            p.sim_seed = sim_seed;
            p.grid = run.grid;
            p.domain = box_from_json(cfg);
            p.start = cfg.contains("start") ? vector_from_json(cfg["start"])
                                            : ((p.domain.lo + p.domain.hi) / 2.0).eval();
            p.weighting = weighting_from_json(cfg);
            p.opt = optim_from_json(cfg, opt_seed);
            run.result = estimate_iid_simulated(p);
        }
        return run;
    }
    if (estimator == "dynamics" || estimator == "joint") {
        if (!cfg.contains("noise")) throw ConfigError("estimate: missing \"noise\"");
        const NoiseModel noise = noise_from_json(cfg["noise"]);
        if (!cfg.contains("system")) throw ConfigError("estimate: missing \"system\"");
        const SystemSpec spec = system_spec_from_json(cfg["system"]);
        if (!cfg.contains("free_theta") || !cfg["free_theta"].is_array())
            throw ConfigError("estimate: missing \"free_theta\" index array");
        std::vector<int> free_theta;
        for (const auto& v : cfg["free_theta"]) free_theta.push_back(v.get<int>());

        // marginal c.f. of delta-y for grid scaling (at the template theta)
        const SystemModel sys0 = SystemModel::build(spec);
        auto marginal = [&](double u) {
            Eigen::VectorXd uu(1);
            uu[0] = u;
            return joint_cf(sys0, noise, uu).value;
        };
        if (!cfg.contains("grid")) throw ConfigError("estimate: missing \"grid\"");
        run.grid = resolve_block_grid(cfg["grid"], marginal);

        const long n_default = static_cast<long>(data.size()) - run.grid.r;
        if (estimator == "dynamics") {
            DynamicsProblem p(noise);
            p.data = data;
            p.structure = spec;
            p.free_theta = free_theta;
            p.grid = run.grid;
            p.n_sim = cfg.value("n_sim", n_default);
            p.sim_seed = sim_seed;
            p.domain = box_from_json(cfg);
            p.start = cfg.contains("start") ? vector_from_json(cfg["start"])
                                            : ((p.domain.lo + p.domain.hi) / 2.0).eval();
            p.weighting = weighting_from_json(cfg);
            p.opt = optim_from_json(cfg, opt_seed);
            run.result = estimate_dynamics(p);
        } else {
            JointProblem p(noise);
            p.data = data;
            p.structure = spec;
            p.free_theta = free_theta;
            if (cfg.contains("free_eta") && cfg["free_eta"].is_array() &&
                !cfg["free_eta"].empty()) {
                const auto names = noise_param_names(noise);
                for (const auto& name : cfg["free_eta"]) {
                    const auto it = names.find(name.get<std::string>());
                    if (it == names.end())
                        throw ConfigError("estimate: unknown free_eta name \"" +
                                          name.get<std::string>() + '"');
                    p.free_eta.push_back(it->second);
                }
            }
            p.grid = run.grid;
            p.n_sim = cfg.value("n_sim", n_default);
            p.sim_seed = sim_seed;
            p.domain = box_from_json(cfg);
            p.start = cfg.contains("start") ? vector_from_json(cfg["start"])
                                            : ((p.domain.lo + p.domain.hi) / 2.0).eval();
            if (cfg.contains("weighting")) p.weighting = weighting_from_json(cfg);
            p.opt = optim_from_json(cfg, opt_seed);
            run.result = estimate_joint(p);
        }
        return run;
    }
    throw ConfigError("estimate: unknown estimator \"" + estimator + '"');
}

} // namespace

json run_estimate(const json& cfg, const std::string& data_path,
                  const std::string& out_path) {
    const std::string data_bytes = read_text(data_path);
    const SeriesFile data = read_series_csv(data_path);
    const std::uint64_t master = cfg.value("seed", std::uint64_t{1});
    const RepSeeds seeds = replication_seeds(master, 0);

    const EstimatorRun run = run_estimator_on(cfg, data.series, seeds.sim, seeds.opt);

    json out = result_to_json(run.result);
    out["schema_version"] = 1;
    out["kind"] = "estimate";
    out["estimator"] = cfg["estimator"];
    out["grid"] = grid_to_json(run.grid);
    out["config"] = cfg;
    out["config_hash"] = hash_string(config_hash(cfg));
    out["data_file"] = data_path;
    out["data_hash"] = hash_string(bytes_hash(data_bytes));
    out["master_seed"] = master;
    if (!out_path.empty()) write_json_atomic(out_path, out);
    return out;
}

// --------------------------------------------------------------- montecarlo

namespace {

struct RepOutcome {
    bool ok = false;
    std::string error;
    Eigen::VectorXd estimate;
    Eigen::VectorXd ci_half; // 1.96 sqrt(diag(cov)/N)
    double extra = 0.0;      // second estimate for factor2 (known-cf column)
    Eigen::VectorXd extra_vec;
};

// Generate the data series configured under "truth" for one replication.
std::vector<double> montecarlo_data(const json& cfg, long n, std::uint64_t data_seed) {
    const std::string estimator = cfg["estimator"].get<std::string>();
    if (estimator == "dynamics" || estimator == "joint") {
        json sim;
        sim["noise"] = cfg["problem"]["noise"];
        sim["system"] = cfg["problem"]["system"];
        const int r = cfg["problem"]["grid"].contains("points")
                          ? cfg["problem"]["grid"]["r"].get<int>()
                          : cfg["problem"]["grid"].value("r", 1);
        sim["n"] = n + r;
        sim["seed"] = data_seed;
        return simulate_series(sim, data_seed);
    }
    const IidFamily fam = iid_family_from_json(cfg["problem"]["family"]);
    return fam.sample(n, data_seed, fam.truth());
}

Eigen::MatrixXd sample_cov(const std::vector<Eigen::VectorXd>& xs) {
    const long p = xs.front().size();
    const long n = static_cast<long>(xs.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
    for (const auto& x : xs) mean += x;
    mean /= static_cast<double>(n);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
    for (const auto& x : xs) {
        const Eigen::VectorXd d = x - mean;
        cov += d * d.transpose();
    }
    return cov / static_cast<double>(n - 1);
}

// Asymptotic covariance formula evaluated at the truth (no data involved).
Eigen::MatrixXd theory_cov_at_truth(const json& cfg, const UGrid& grid) {
    const std::string estimator = cfg["estimator"].get<std::string>();
    const json& prob = cfg["problem"];
    if (estimator == "iid_known_cf" || estimator == "iid_simulated" ||
        estimator == "factor2") {
        const IidFamily fam = iid_family_from_json(prob["family"]);
        const Eigen::VectorXd truth = fam.truth();
        auto phi_eta = fam.phi();
        auto phi_vec = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& eta) {
            return phi_eta(u[0], eta);
        };
        const Sensitivity g = sensitivity_matrix(phi_vec, grid, truth);
        auto phi_true = [&](double u) { return phi_eta(u, truth); };
        const WeightMatrix c = regularized(theory_cov_C(phi_true, grid).K);
        const double factor = estimator == "iid_simulated" ? 2.0 : 1.0;
        return asymptotic_cov(g.rows, c, factor);
    }
    if (estimator == "dynamics") {
        const NoiseModel noise = noise_from_json(prob["noise"]);
        const SystemSpec spec = system_spec_from_json(prob["system"]);
        std::vector<int> free_theta;
        for (const auto& v : prob["free_theta"]) free_theta.push_back(v.get<int>());
        auto phi_theta = [&](const Eigen::VectorXd& u, const Eigen::VectorXd& tf) {
            SystemSpec s = spec;
            for (std::size_t i = 0; i < free_theta.size(); ++i)
                s.theta[free_theta[i]] = tf[static_cast<long>(i)];
            return joint_cf(SystemModel::build(s), noise, u).value;
        };
        Eigen::VectorXd truth(static_cast<long>(free_theta.size()));
        for (std::size_t i = 0; i < free_theta.size(); ++i)
            truth[static_cast<long>(i)] = spec.theta[free_theta[i]];
        const Sensitivity h = sensitivity_matrix(phi_theta, grid, truth);
        const SystemModel sys = SystemModel::build(spec);
        const WeightMatrix lam =
            regularized(theory_cov_Lambda(JointCfEvaluator(sys, noise), grid).K);
        return asymptotic_cov(h.rows, lam, 2.0);
    }
    return {};
}

} // namespace

json run_montecarlo(const json& cfg, const std::string& out_dir, int jobs) {
    if (!cfg.contains("estimator")) throw ConfigError("montecarlo: missing \"estimator\"");
    const std::string estimator = cfg["estimator"].get<std::string>();
    if (!cfg.contains("replications")) throw ConfigError("montecarlo: missing \"replications\"");
    const long reps = cfg["replications"].get<long>();
    if (reps < 1) throw ConfigError("montecarlo: replications must be >= 1");
    const bool want_cov = cfg.value("summary", json::object()).value("covariance", true);
    if (want_cov && reps < 30)
        throw ConfigError("montecarlo: covariance summaries need replications >= 30 "
                          "(set summary.covariance = false for smoke runs)");
    if (!cfg.contains("n")) throw ConfigError("montecarlo: missing \"n\"");
    const long n = cfg["n"].get<long>();
    const std::uint64_t master = cfg.value("master_seed", std::uint64_t{1});
    if (!cfg.contains("problem")) throw ConfigError("montecarlo: missing \"problem\"");

    fs::create_directories(out_dir);

    // single-replication estimator config (shared by every rep)
    json rep_cfg = cfg["problem"];
    rep_cfg["estimator"] = estimator == "factor2" ? "iid_known_cf" : estimator;

    std::vector<RepOutcome> outcomes(static_cast<std::size_t>(reps));
    std::atomic<long> next{0};
    const int workers = std::max(1, jobs);
    auto work = [&]() {
        for (;;) {
            const long i = next.fetch_add(1);
            if (i >= reps) return;
            RepOutcome& out = outcomes[static_cast<std::size_t>(i)];
            try {
                const RepSeeds seeds = replication_seeds(master, static_cast<std::uint64_t>(i));
                const std::vector<double> data = montecarlo_data(cfg, n, seeds.data);
                if (estimator == "factor2") {
                    json known = cfg["problem"];
                    known["estimator"] = "iid_known_cf";
                    const EstimatorRun a = run_estimator_on(known, data, seeds.sim, seeds.opt);
                    json simu = cfg["problem"];
                    simu["estimator"] = "iid_simulated";
                    const EstimatorRun b =
                        run_estimator_on(simu, data, seed_split(seeds.sim, 1), seeds.opt);
                    out.estimate = b.result.estimate; // simulated-score column
                    out.extra_vec = a.result.estimate;
                    out.ci_half = (1.96 * (a.result.cov.diagonal() /
                                           static_cast<double>(a.result.n_data))
                                              .cwiseSqrt());
                } else {
                    const EstimatorRun r = run_estimator_on(rep_cfg, data, seeds.sim, seeds.opt);
                    out.estimate = r.result.estimate;
                    if (r.result.cov.size() > 0)
                        out.ci_half = (1.96 * (r.result.cov.diagonal() /
                                               static_cast<double>(r.result.n_data))
                                                  .cwiseSqrt());
                }
                out.ok = true;
            } catch (const std::exception& e) {
                out.ok = false;
                out.error = e.what();
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& t : pool) t.join();
    }

    // deterministic merge in replication order
    std::vector<Eigen::VectorXd> estimates;
    std::vector<Eigen::VectorXd> extra_estimates;
    json failures = json::array();
    long coverage_hits = 0, coverage_total = 0;
    const json& prob = cfg["problem"];
    Eigen::VectorXd truth;
    if (estimator == "dynamics" || estimator == "joint") {
        const SystemSpec spec = system_spec_from_json(prob["system"]);
        std::vector<int> ft;
        for (const auto& v : prob["free_theta"]) ft.push_back(v.get<int>());
        truth.resize(static_cast<long>(ft.size()));
        for (std::size_t i = 0; i < ft.size(); ++i) truth[static_cast<long>(i)] = spec.theta[ft[i]];
        if (estimator == "joint") {
            const NoiseModel noise = noise_from_json(prob["noise"]);
            const auto names = noise_param_names(noise);
            std::vector<int> fe;
            if (prob.contains("free_eta"))
                for (const auto& v : prob["free_eta"]) fe.push_back(names.at(v.get<std::string>()));
            Eigen::VectorXd t2(truth.size() + static_cast<long>(fe.size()));
            t2.head(truth.size()) = truth;
            for (std::size_t i = 0; i < fe.size(); ++i)
                t2[truth.size() + static_cast<long>(i)] = noise.eta()[fe[i]];
            truth = t2;
        }
    } else {
        truth = iid_family_from_json(prob["family"]).truth();
    }

    std::ostringstream reps_csv;
    reps_csv << "# ecfid montecarlo reps v1\n";
    reps_csv << "rep,ok";
    for (long c = 0; c < truth.size(); ++c) reps_csv << ",est_" << c;
    if (estimator == "factor2")
        for (long c = 0; c < truth.size(); ++c) reps_csv << ",known_est_" << c;
    reps_csv << "\n";
    char numbuf[40];
    for (long i = 0; i < reps; ++i) {
        const RepOutcome& out = outcomes[static_cast<std::size_t>(i)];
        reps_csv << i << ',' << (out.ok ? 1 : 0);
        if (out.ok) {
            estimates.push_back(out.estimate);
            for (long c = 0; c < out.estimate.size(); ++c) {
                std::snprintf(numbuf, sizeof numbuf, "%.17g", out.estimate[c]);
                reps_csv << ',' << numbuf;
            }
            if (estimator == "factor2") {
                extra_estimates.push_back(out.extra_vec);
                for (long c = 0; c < out.extra_vec.size(); ++c) {
                    std::snprintf(numbuf, sizeof numbuf, "%.17g", out.extra_vec[c]);
                    reps_csv << ',' << numbuf;
                }
            }
            if (out.ci_half.size() == truth.size()) {
                ++coverage_total;
                const Eigen::VectorXd est = estimator == "factor2" ? out.extra_vec : out.estimate;
                bool inside = true;
                for (long c = 0; c < truth.size(); ++c)
                    if (std::abs(est[c] - truth[c]) > out.ci_half[c]) inside = false;
                if (inside) ++coverage_hits;
            }
        } else {
            json f;
            f["rep"] = i;
            f["error"] = out.error;
            failures.push_back(f);
            for (long c = 0; c < truth.size(); ++c) reps_csv << ',';
            if (estimator == "factor2")
                for (long c = 0; c < truth.size(); ++c) reps_csv << ',';
        }
        reps_csv << '\n';
    }
    const std::string reps_path = (fs::path(out_dir) / "reps.csv").string();
    write_text_atomic(reps_path, reps_csv.str());

    json summary;
    summary["schema_version"] = 1;
    summary["kind"] = "montecarlo";
    summary["estimator"] = estimator;
    summary["replications"] = reps;
    summary["n"] = n;
    summary["master_seed"] = master;
    summary["successes"] = estimates.size();
    summary["failures"] = failures;
    const double fail_rate = static_cast<double>(reps - static_cast<long>(estimates.size())) /
                             static_cast<double>(reps);
    summary["failure_rate"] = fail_rate;
    summary["flag_failures_gt_5pct"] = fail_rate > 0.05;
    summary["config"] = cfg;
    summary["config_hash"] = hash_string(config_hash(cfg));
    summary["per_rep_file"] = "reps.csv";

    if (!estimates.empty()) {
        Eigen::VectorXd mean = Eigen::VectorXd::Zero(truth.size());
        for (const auto& e : estimates) mean += e;
        mean /= static_cast<double>(estimates.size());
        summary["estimate_mean"] = vector_to_json(mean);
        summary["truth"] = vector_to_json(truth);
        summary["bias"] = vector_to_json((mean - truth).eval());
        if (coverage_total > 0)
            summary["coverage95"] = static_cast<double>(coverage_hits) /
                                    static_cast<double>(coverage_total);
        if (want_cov && estimates.size() >= 2) {
            const Eigen::MatrixXd cov_scaled =
                static_cast<double>(n) * sample_cov(estimates);
            summary["cov_scaled"] = matrix_to_json(cov_scaled);
            // resolve the grid deterministically from the truth-scale c.f.
            UGrid grid;
            if (estimator == "dynamics" || estimator == "joint") {
                const NoiseModel noise = noise_from_json(prob["noise"]);
                const SystemModel sys0 = SystemModel::build(system_spec_from_json(prob["system"]));
                auto marginal = [&](double u) {
                    Eigen::VectorXd uu(1);
                    uu[0] = u;
                    return joint_cf(sys0, noise, uu).value;
                };
                grid = resolve_block_grid(prob["grid"], marginal);
            } else {
                const IidFamily fam = iid_family_from_json(prob["family"]);
                auto phi_true = [&](double u) { return fam.phi()(u, fam.truth()); };
                grid = resolve_scalar_grid(prob["grid"], phi_true);
            }
            const Eigen::MatrixXd theory = theory_cov_at_truth(cfg, grid);
            if (theory.size() > 0) {
                summary["theory_cov"] = matrix_to_json(theory);
                const double diag_scale = theory.diagonal().cwiseAbs().maxCoeff();
                summary["max_rel_dev"] =
                    (cov_scaled - theory).cwiseAbs().maxCoeff() / diag_scale;
            }
        }
        if (estimator == "factor2" && extra_estimates.size() >= 2) {
            const Eigen::MatrixXd var_sim = sample_cov(estimates);
            const Eigen::MatrixXd var_known = sample_cov(extra_estimates);
            summary["ratio"] = var_sim(0, 0) / var_known(0, 0);
        }
    }

    write_json_atomic((fs::path(out_dir) / "summary.json").string(), summary);
    return summary;
}

// ----------------------------------------------------------------- covcheck

json run_covcheck(const json& cfg, const std::string& out_path) {
    const std::string target = cfg.value("target", "");
    const long n = cfg.value("n", 0L);
    if (n < 2) throw ConfigError("covcheck: missing or invalid \"n\"");
    const std::uint64_t seed = cfg.value("seed", std::uint64_t{1});

    Eigen::MatrixXcd emp, theory;
    Eigen::MatrixXd se;
    if (target == "iid_C") {
        const NoiseModel noise = noise_from_json(cfg.at("model"));
        auto phi = [&](double u) { return noise.char_fn_increment(u); };
        const UGrid grid = resolve_scalar_grid(cfg.at("grid"), phi);
        const std::vector<double> data = noise.sample_increments(n, seed);
        const Eigen::VectorXd us = grid.points.col(0);
        Eigen::MatrixXcd scores(n, grid.size());
        for (int k = 0; k < grid.size(); ++k)
            for (long i = 0; i < n; ++i)
                scores(i, k) = cxd{std::cos(us[k] * data[static_cast<std::size_t>(i)]),
                                   std::sin(us[k] * data[static_cast<std::size_t>(i)])} -
                               phi(us[k]);
        const ScoreSet set = average_scores(scores);
        emp = empirical_cov(set);
        theory = theory_cov_C(phi, grid).K;
        // moment-based standard errors of each covariance entry
        se.resize(grid.size(), grid.size());
        for (int k = 0; k < grid.size(); ++k)
            for (int l = 0; l < grid.size(); ++l) {
                double var = 0.0;
                for (long i = 0; i < n; ++i) {
                    const cxd z = (scores(i, k) - set.average[k]) *
                                  std::conj(scores(i, l) - set.average[l]);
                    var += std::norm(z - emp(k, l));
                }
                se(k, l) = std::sqrt(var / static_cast<double>(n) / static_cast<double>(n));
            }
    } else if (target == "blocks_lambda") {
        const NoiseModel noise = noise_from_json(cfg.at("model"));
        const SystemModel sys = SystemModel::build(system_spec_from_json(cfg.at("system")));
        auto marginal = [&](double u) {
            Eigen::VectorXd uu(1);
            uu[0] = u;
            return joint_cf(sys, noise, uu).value;
        };
        const UGrid grid = resolve_block_grid(cfg.at("grid"), marginal);
        const int r = grid.r;
        const int warmup = sys.warmup_length();
        const std::vector<double> real =
            sys.filter(noise.sample_increments(n + r + warmup, seed_split(seed, 0)), warmup);
        const std::vector<double> sim =
            sys.filter(noise.sample_increments(n + r + warmup, seed_split(seed, 1)), warmup);
        const Eigen::MatrixXcd scores =
            paired_scores_blocks(make_blocks(real, r), make_blocks(sim, r), grid);
        const ScoreSet set = average_scores(scores);
        emp = empirical_cov(set);
        theory = doubled(theory_cov_Lambda(JointCfEvaluator(sys, noise), grid)).K;
        se.resize(grid.size(), grid.size());
        for (int k = 0; k < grid.size(); ++k)
            for (int l = 0; l < grid.size(); ++l) {
                double var = 0.0;
                for (long i = 0; i < set.n; ++i) {
                    const cxd z = (set.values(i, k) - set.average[k]) *
                                  std::conj(set.values(i, l) - set.average[l]);
                    var += std::norm(z - emp(k, l));
                }
                se(k, l) = std::sqrt(var / static_cast<double>(set.n) /
                                     static_cast<double>(set.n));
            }
    } else {
        throw ConfigError("covcheck: target must be \"iid_C\" or \"blocks_lambda\"");
    }

    double max_se_ratio = 0.0, max_abs = 0.0;
    for (long k = 0; k < emp.rows(); ++k)
        for (long l = 0; l < emp.cols(); ++l) {
            const double dev = std::abs(emp(k, l) - theory(k, l));
            max_abs = std::max(max_abs, dev);
            max_se_ratio = std::max(max_se_ratio, dev / std::max(se(k, l), 1e-300));
        }
    json out;
    out["schema_version"] = 1;
    out["kind"] = "covcheck";
    out["target"] = target;
    out["n"] = n;
    out["seed"] = seed;
    out["max_abs_dev"] = max_abs;
    out["max_se_ratio"] = max_se_ratio;
    out["pass_5se"] = max_se_ratio <= 5.0;
    out["theory_re"] = matrix_to_json(theory.real());
    out["theory_im"] = matrix_to_json(theory.imag());
    out["empirical_re"] = matrix_to_json(emp.real());
    out["empirical_im"] = matrix_to_json(emp.imag());
    out["config"] = cfg;
    out["config_hash"] = hash_string(config_hash(cfg));
    if (!out_path.empty()) write_json_atomic(out_path, out);
    return out;
}

// ------------------------------------------------------------------- replay

namespace {

bool replay_simulate_csv(const std::string& path, std::string* detail) {
    const SeriesFile f = read_series_csv(path);
    const auto it = f.meta.find("config");
    if (it == f.meta.end()) {
        if (detail) *detail = "no embedded config in " + path;
        return false;
    }
    const json cfg = json::parse(it->second);
    const std::string tmp = path + ".replay";
    run_simulate(cfg, tmp);
    const bool same = read_text(path) == read_text(tmp);
    std::filesystem::remove(tmp);
    if (!same && detail) *detail = "re-simulated series differs byte-wise";
    return same;
}

} // namespace

bool replay(const std::string& path, int jobs, std::string* detail) {
    if (path.size() > 4 && path.substr(path.size() - 4) == ".csv")
        return replay_simulate_csv(path, detail);

    const json original = read_json(path);
    const std::string kind = original.value("kind", "");
    if (kind == "estimate") {
        const json cfg = original.at("config");
        const std::string data_path = original.at("data_file").get<std::string>();
        const std::string data_hash = hash_string(bytes_hash(read_text(data_path)));
        if (data_hash != original.at("data_hash").get<std::string>()) {
            if (detail) *detail = "data file changed since the original run";
            return false;
        }
        const json redo = run_estimate(cfg, data_path, "");
        const bool same = redo.dump() == original.dump();
        if (!same && detail) *detail = "re-estimation result differs";
        return same;
    }
    if (kind == "montecarlo") {
        const json cfg = original.at("config");
        const std::string tmp_dir = path + ".replay.d";
        const json redo = run_montecarlo(cfg, tmp_dir, jobs);
        const bool same = redo.dump() == original.dump();
        std::filesystem::remove_all(tmp_dir);
        if (!same && detail) *detail = "re-run summary differs";
        return same;
    }
    if (kind == "covcheck") {
        const json redo = run_covcheck(original.at("config"), "");
        const bool same = redo.dump() == original.dump();
        if (!same && detail) *detail = "re-run covcheck differs";
        return same;
    }
    if (detail) *detail = "unrecognized result kind \"" + kind + '"';
    return false;
}

} // namespace ecfid
