// Command-line front end: simulate series, run estimators, drive Monte Carlo
// replication studies, verify covariance formulas, and replay past runs
// bit-exactly. Exit codes: 0 ok, 2 configuration error, 3 optimizer
// non-convergence, 4 identifiability failure, 1 anything else.

#include <filesystem>
#include <iostream>

#include <CLI11.hpp>

#include "ecfid/errors.hpp"
#include "ecfid/harness.hpp"

namespace {

int dispatch(const std::function<int()>& body) {
    try {
        return body();
    } catch (const ecfid::IdentifiabilityError& e) {
        std::cerr << "identifiability error: " << e.what() << '\n';
        return 4;
    } catch (const ecfid::NonConvergenceError& e) {
        std::cerr << "non-convergence: " << e.what() << '\n';
        return 3;
    } catch (const ecfid::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const ecfid::UnsupportedError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

ecfid::json load_config(const std::string& path) {
    if (path.empty()) throw ecfid::ConfigError("--config is required");
    return ecfid::read_json(path);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ECF identification of Levy-driven linear systems"};
    app.require_subcommand(1);

    std::string config_path, out = "out", data_path, replay_path;
    std::uint64_t seed = 0;
    bool seed_given = false;
    int jobs = 1;

    auto add_common = [&](CLI::App* cmd, bool with_out = true) {
        cmd->add_option("--config", config_path, "JSON config file")->required();
        if (with_out) cmd->add_option("--out", out, "output path or directory");
        cmd->add_option_function<std::uint64_t>(
               "--seed", [&](std::uint64_t s) { seed = s; seed_given = true; },
               "override the master seed");
    };

    auto* simulate = app.add_subcommand("simulate", "simulate a series to CSV");
    add_common(simulate);

    auto* estimate = app.add_subcommand("estimate", "run one estimation");
    add_common(estimate);
    estimate->add_option("--data", data_path, "input series CSV")->required();

    auto* montecarlo = app.add_subcommand("montecarlo", "replicated estimation study");
    add_common(montecarlo);
    montecarlo->add_option("--jobs", jobs, "parallel workers over replications");

    auto* covcheck = app.add_subcommand("covcheck", "verify a covariance formula");
    add_common(covcheck);

    auto* replay_cmd = app.add_subcommand("replay", "re-run an output file bit-exactly");
    replay_cmd->add_option("file", replay_path, "CSV or JSON produced by this tool")
        ->required();
    replay_cmd->add_option("--jobs", jobs, "parallel workers (montecarlo files)");

    CLI11_PARSE(app, argc, argv);

    return dispatch([&]() -> int {
        if (simulate->parsed()) {
            ecfid::json cfg = load_config(config_path);
            if (seed_given) cfg["seed"] = seed;
            std::string path = out;
            if (std::filesystem::is_directory(out) ||
                (out.find('.') == std::string::npos)) {
                std::filesystem::create_directories(out);
                path = (std::filesystem::path(out) / "series.csv").string();
            }
            const ecfid::json meta = ecfid::run_simulate(cfg, path);
            std::cout << meta.dump(2) << '\n';
            return 0;
        }
        if (estimate->parsed()) {
            ecfid::json cfg = load_config(config_path);
            if (seed_given) cfg["seed"] = seed;
            std::string path = out;
            if (std::filesystem::is_directory(out) ||
                (out.find('.') == std::string::npos)) {
                std::filesystem::create_directories(out);
                path = (std::filesystem::path(out) / "result.json").string();
            }
            const ecfid::json result = ecfid::run_estimate(cfg, data_path, path);
            std::cout << "estimate: " << result["estimate"].dump()
                      << "  cost: " << result["cost"] << "  -> " << path << '\n';
            return 0;
        }
        if (montecarlo->parsed()) {
            ecfid::json cfg = load_config(config_path);
            if (seed_given) cfg["master_seed"] = seed;
            const ecfid::json summary = ecfid::run_montecarlo(cfg, out, jobs);
            std::cout << "replications: " << summary["replications"]
                      << "  successes: " << summary["successes"] << "  -> " << out
                      << "/summary.json\n";
            return 0;
        }
        if (covcheck->parsed()) {
            ecfid::json cfg = load_config(config_path);
            if (seed_given) cfg["seed"] = seed;
            std::string path = out;
            if (std::filesystem::is_directory(out) ||
                (out.find('.') == std::string::npos)) {
                std::filesystem::create_directories(out);
                path = (std::filesystem::path(out) / "covcheck.json").string();
            }
            const ecfid::json result = ecfid::run_covcheck(cfg, path);
            std::cout << "max |emp - theory| / se = " << result["max_se_ratio"]
                      << (result["pass_5se"].get<bool>() ? "  (pass)" : "  (FAIL)")
                      << '\n';
            return 0;
        }
        if (replay_cmd->parsed()) {
            std::string detail;
            const bool ok = ecfid::replay(replay_path, jobs, &detail);
            if (ok) {
                std::cout << "replay: identical\n";
                return 0;
            }
            std::cerr << "replay: MISMATCH — " << detail << '\n';
            return 1;
        }
        return 1;
    });
}
