#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "ecfid/config.hpp"
#include "ecfid/errors.hpp"

using namespace ecfid;

namespace {

struct TempDir {
    std::filesystem::path path;
    TempDir() {
        path = std::filesystem::temp_directory_path() /
               ("ecfid_test_" + std::to_string(::getpid()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("noise config round trip preserves every family") {
    const NoiseModel models[] = {
        NoiseModel::compound_poisson_gaussian(1.5, 0.25, 0.75, 0.5, true),
        NoiseModel::compound_poisson_two_point(2.0, 1.0, -0.5, 0.3, 1.0, false),
        NoiseModel::variance_gamma(0.2, 0.5, -0.1, 1.0, true),
        NoiseModel::alpha_stable(1.5, 1.0, 0.4, 2.0, false),
        NoiseModel::cgmy(1.0, 5.0, 5.0, 0.5, 1.0, false)};
    for (const auto& m : models) {
        const NoiseModel back = noise_from_json(noise_to_json(m));
        CHECK(back.family() == m.family());
        CHECK(back.eta() == m.eta());
        CHECK(back.h() == m.h());
        CHECK(back.centered() == m.centered());
    }
}

TEST_CASE("the documented vg example parses with its exact field names") {
    const json cfg = json::parse(
        R"({"family": "vg", "sigma": 0.2, "nu": 0.5, "theta_d": -0.1, "h": 1.0, "center": true})");
    const NoiseModel m = noise_from_json(cfg);
    CHECK(m.family() == NoiseFamily::VarianceGamma);
    CHECK(m.eta()[0] == 0.2);
    CHECK(m.eta()[1] == 0.5);
    CHECK(m.eta()[2] == -0.1);
    CHECK(m.centered());
}

TEST_CASE("config validation failures carry field-level messages") {
    try {
        noise_from_json(json::parse(R"({"family": "vg", "sigma": 0.2, "h": 1.0})"));
        FAIL("expected rejection");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("nu") != std::string::npos);
    }
    CHECK_THROWS_AS(noise_from_json(json::parse(R"({"family": "bogus", "h": 1.0})")),
                    ConfigError);
}

TEST_CASE("system config round trip, documented fir example") {
    const json cfg = json::parse(R"({"structure": "fir", "theta": [1.0, 2.0]})");
    const SystemSpec spec = system_spec_from_json(cfg);
    CHECK(spec.structure == SystemStructure::Fir);
    CHECK(spec.theta.size() == 2);
    const SystemSpec back = system_spec_from_json(system_spec_to_json(spec));
    CHECK(back.theta == spec.theta);

    const json arma = json::parse(
        R"({"structure": "arma", "p_a": 1, "p_b": 1, "theta": [0.5, 3.0]})");
    const SystemSpec as = system_spec_from_json(arma);
    CHECK(as.p_a == 1);
    CHECK(as.p_b == 1);
}

TEST_CASE("grid round trip preserves the seed and points exactly") {
    UGrid g;
    g.r = 2;
    g.points.resize(4, 2);
    g.points << 0.1, -0.7, -0.1, 0.7, 1.0 / 3.0, 2.0, -1.0 / 3.0, -2.0;
    g.seed = 777;
    const UGrid back = grid_from_json(grid_to_json(g));
    CHECK(back.r == 2);
    CHECK(back.seed == 777);
    CHECK((back.points - g.points).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("config hash is stable and canonical") {
    const json a = json::parse(R"({"b": 1, "a": [1.5, 2}] })", nullptr, false);
    CHECK(a.is_discarded()); // parse guard sanity
    const json x = json::parse(R"({"b": 1, "a": 2})");
    const json y = json::parse(R"({"a": 2, "b": 1})");
    CHECK(config_hash(x) == config_hash(y)); // key order canonicalized
    CHECK(hash_string(config_hash(x)).substr(0, 2) == "0x");
}

TEST_CASE("series CSV round trip is bit exact with provenance") {
    TempDir tmp;
    const std::string path = tmp.file("series.csv");
    const std::vector<double> xs{0.1, -2.75, 1e-17, 3.141592653589793, -0.0};
    write_series_csv(path, xs, {{"config_hash", "0xdeadbeef"}, {"seed", "42"}});
    const SeriesFile f = read_series_csv(path);
    REQUIRE(f.series.size() == xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(f.series[i] == xs[i]);
    CHECK(f.meta.at("config_hash") == "0xdeadbeef");
    CHECK(f.meta.at("seed") == "42");
}

TEST_CASE("missing files raise config errors") {
    CHECK_THROWS_AS(read_series_csv("/nonexistent/zzz.csv"), ConfigError);
    CHECK_THROWS_AS(read_json("/nonexistent/zzz.json"), ConfigError);
}

TEST_CASE("atomic json write and read back") {
    TempDir tmp;
    const std::string path = tmp.file("x.json");
    json j;
    j["v"] = std::vector<double>{1.0, 0.1 + 0.2};
    write_json_atomic(path, j);
    const json back = read_json(path);
    CHECK(back["v"][1].get<double>() == 0.1 + 0.2); // shortest-round-trip doubles
    CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
}

TEST_CASE("noise parameter name tables match the eta layouts") {
    const auto cp = NoiseModel::compound_poisson_gaussian(1.0, 0.5, 1.0, 1.0, true);
    const auto names = noise_param_names(cp);
    CHECK(names.at("lambda") == 0);
    CHECK(names.at("mu") == 1);
    CHECK(names.at("sigma") == 2);
    const auto vg = NoiseModel::variance_gamma(0.2, 0.5, -0.1, 1.0, true);
    CHECK(noise_param_names(vg).at("theta_d") == 2);
}
