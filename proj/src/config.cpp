#include "ecfid/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ecfid/errors.hpp"

namespace ecfid {

namespace {

double need_number(const json& cfg, const char* key) {
    if (!cfg.contains(key) || !cfg[key].is_number()) {
        throw ConfigError(std::string("config: missing or non-numeric field \"") + key + '"');
    }
    return cfg[key].get<double>();
}

std::string need_string(const json& cfg, const char* key) {
    if (!cfg.contains(key) || !cfg[key].is_string())
        throw ConfigError(std::string("config: missing or non-string field \"") + key + '"');
    return cfg[key].get<std::string>();
}

bool get_bool(const json& cfg, const char* key, bool fallback) {
    if (!cfg.contains(key)) return fallback;
    if (!cfg[key].is_boolean())
        throw ConfigError(std::string("config: field \"") + key + "\" must be boolean");
    return cfg[key].get<bool>();
}

} // namespace

// -------------------------------------------------------------------- noise

json noise_to_json(const NoiseModel& m) {
    json j;
    j["h"] = m.h();
    j["center"] = m.centered();
    const Eigen::VectorXd eta = m.eta();
    switch (m.family()) {
    case NoiseFamily::CompoundPoisson:
        j["family"] = "compound_poisson";
        j["lambda"] = eta[0];
        if (m.jump_law() == JumpLaw::Gaussian) {
            j["jumps"] = {{"type", "gaussian"}, {"mu", eta[1]}, {"sigma", eta[2]}};
        } else {
            j["jumps"] = {{"type", "two_point"}, {"a", eta[1]}, {"b", eta[2]}, {"p", eta[3]}};
        }
        break;
    case NoiseFamily::VarianceGamma:
        j["family"] = "vg";
        j["sigma"] = eta[0];
        j["nu"] = eta[1];
        j["theta_d"] = eta[2];
        break;
    case NoiseFamily::AlphaStable:
        j["family"] = "alpha_stable";
        j["alpha"] = eta[0];
        j["c_minus"] = eta[1];
        j["c_plus"] = eta[2];
        break;
    case NoiseFamily::Cgmy:
        j["family"] = "cgmy";
        j["c"] = eta[0];
        j["g"] = eta[1];
        j["m_t"] = eta[2];
        j["y"] = eta[3];
        break;
    }
    return j;
}

NoiseModel noise_from_json(const json& cfg) {
    const std::string family = need_string(cfg, "family");
    const double h = need_number(cfg, "h");
    const bool center = get_bool(cfg, "center", true);
    if (family == "compound_poisson") {
        const double lambda = need_number(cfg, "lambda");
        if (!cfg.contains("jumps") || !cfg["jumps"].is_object())
            throw ConfigError("compound_poisson: missing \"jumps\" object");
        const json& jumps = cfg["jumps"];
        const std::string type = need_string(jumps, "type");
        if (type == "gaussian")
            return NoiseModel::compound_poisson_gaussian(
                lambda, need_number(jumps, "mu"), need_number(jumps, "sigma"), h, center);
        if (type == "two_point")
            return NoiseModel::compound_poisson_two_point(
                lambda, need_number(jumps, "a"), need_number(jumps, "b"),
                need_number(jumps, "p"), h, center);
        throw ConfigError("compound_poisson: jump type must be \"gaussian\" or \"two_point\"");
    }
    if (family == "vg")
        return NoiseModel::variance_gamma(need_number(cfg, "sigma"), need_number(cfg, "nu"),
                                          need_number(cfg, "theta_d"), h, center);
    if (family == "alpha_stable")
        return NoiseModel::alpha_stable(need_number(cfg, "alpha"), need_number(cfg, "c_minus"),
                                        need_number(cfg, "c_plus"), h, center);
    if (family == "cgmy")
        return NoiseModel::cgmy(need_number(cfg, "c"), need_number(cfg, "g"),
                                need_number(cfg, "m_t"), need_number(cfg, "y"), h, center);
    throw ConfigError("noise: unknown family \"" + family + '"');
}

std::map<std::string, int> noise_param_names(const NoiseModel& m) {
    switch (m.family()) {
    case NoiseFamily::CompoundPoisson:
        if (m.jump_law() == JumpLaw::Gaussian)
            return {{"lambda", 0}, {"mu", 1}, {"sigma", 2}};
        return {{"lambda", 0}, {"a", 1}, {"b", 2}, {"p", 3}};
    case NoiseFamily::VarianceGamma:
        return {{"sigma", 0}, {"nu", 1}, {"theta_d", 2}};
    case NoiseFamily::AlphaStable:
        return {{"alpha", 0}, {"c_minus", 1}, {"c_plus", 2}};
    case NoiseFamily::Cgmy:
        return {{"c", 0}, {"g", 1}, {"m_t", 2}, {"y", 3}};
    }
    throw ConfigError("noise_param_names: unknown family");
}

// ------------------------------------------------------------------- system

json system_spec_to_json(const SystemSpec& spec) {
    json j;
    j["theta"] = std::vector<double>(spec.theta.data(), spec.theta.data() + spec.theta.size());
    switch (spec.structure) {
    case SystemStructure::Fir:
        j["structure"] = "fir";
        break;
    case SystemStructure::Arma:
        j["structure"] = "arma";
        j["p_a"] = spec.p_a;
        j["p_b"] = spec.p_b;
        break;
    case SystemStructure::StateSpace:
        j["structure"] = "state_space";
        j["dim"] = spec.dim;
        break;
    }
    return j;
}

SystemSpec system_spec_from_json(const json& cfg) {
    SystemSpec spec;
    const std::string structure = need_string(cfg, "structure");
    if (!cfg.contains("theta") || !cfg["theta"].is_array())
        throw ConfigError("system: missing \"theta\" array");
    spec.theta = vector_from_json(cfg["theta"]);
    if (structure == "fir") {
        spec.structure = SystemStructure::Fir;
    } else if (structure == "arma") {
        spec.structure = SystemStructure::Arma;
        spec.p_a = static_cast<int>(need_number(cfg, "p_a"));
        spec.p_b = static_cast<int>(need_number(cfg, "p_b"));
    } else if (structure == "state_space") {
        spec.structure = SystemStructure::StateSpace;
        spec.dim = static_cast<int>(need_number(cfg, "dim"));
    } else {
        throw ConfigError("system: unknown structure \"" + structure + '"');
    }
    return spec;
}

// --------------------------------------------------------------------- grid

json grid_to_json(const UGrid& grid) {
    json j;
    j["r"] = grid.r;
    json pts = json::array();
    for (int k = 0; k < grid.size(); ++k) {
        json row = json::array();
        for (int c = 0; c < grid.r; ++c) row.push_back(grid.points(k, c));
        pts.push_back(row);
    }
    j["points"] = pts;
    if (grid.seed != 0) j["seed"] = grid.seed;
    return j;
}

UGrid grid_from_json(const json& cfg) {
    UGrid g;
    g.r = static_cast<int>(need_number(cfg, "r"));
    if (!cfg.contains("points") || !cfg["points"].is_array())
        throw ConfigError("grid: missing \"points\" array");
    const auto& pts = cfg["points"];
    g.points.resize(static_cast<long>(pts.size()), g.r);
    for (std::size_t k = 0; k < pts.size(); ++k) {
        if (!pts[k].is_array() || static_cast<int>(pts[k].size()) != g.r)
            throw ConfigError("grid: each point must be an array of length r");
        for (int c = 0; c < g.r; ++c) g.points(static_cast<long>(k), c) = pts[k][static_cast<std::size_t>(c)].get<double>();
    }
    if (cfg.contains("seed")) g.seed = cfg["seed"].get<std::uint64_t>();
    g.validate();
    return g;
}

json weight_to_json(const WeightMatrix& w) {
    json j;
    j["eps"] = w.eps;
    j["k_re"] = matrix_to_json(w.K.real());
    j["k_im"] = matrix_to_json(w.K.imag());
    return j;
}

// ------------------------------------------------------------------ helpers

json vector_to_json(const Eigen::VectorXd& v) {
    json a = json::array();
    for (long i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

Eigen::VectorXd vector_from_json(const json& a) {
    if (!a.is_array()) throw ConfigError("expected a numeric array");
    Eigen::VectorXd v(static_cast<long>(a.size()));
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!a[i].is_number()) throw ConfigError("expected a numeric array");
        v[static_cast<long>(i)] = a[i].get<double>();
    }
    return v;
}

json matrix_to_json(const Eigen::MatrixXd& m) {
    json a = json::array();
    for (long i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (long j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(row);
    }
    return a;
}

Eigen::MatrixXd matrix_from_json(const json& a) {
    if (!a.is_array()) throw ConfigError("expected an array of rows");
    const long rows = static_cast<long>(a.size());
    if (rows == 0) return {};
    const long cols = static_cast<long>(a[0].size());
    Eigen::MatrixXd m(rows, cols);
    for (long i = 0; i < rows; ++i) {
        if (static_cast<long>(a[static_cast<std::size_t>(i)].size()) != cols)
            throw ConfigError("ragged matrix rows");
        for (long j = 0; j < cols; ++j)
            m(i, j) = a[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)].get<double>();
    }
    return m;
}

json result_to_json(const EstimationResult& r) {
    json j;
    j["estimate"] = vector_to_json(r.estimate);
    j["cost"] = r.cost;
    j["cov_factor"] = r.cov_factor;
    if (r.cov.size() > 0) j["cov"] = matrix_to_json(r.cov);
    j["n_data"] = r.n_data;
    j["n_sim"] = r.n_sim;
    j["stages"] = r.stages;
    j["weight"] = weight_to_json(r.weight);
    j["seeds"] = r.seeds;
    json opt;
    opt["iterations"] = r.opt.iterations;
    opt["evals"] = r.opt.evals;
    opt["grad_norm"] = r.opt.grad_norm;
    opt["converged"] = r.opt.converged;
    opt["boundary_hit"] = r.opt.boundary_hit;
    opt["best_start"] = r.opt.best_start;
    opt["n_starts"] = r.opt.n_starts;
    opt["cost_history"] = r.opt.cost_history;
    j["optimizer"] = opt;
    return j;
}

// -------------------------------------------------------------------- hash

std::uint64_t bytes_hash(const std::string& bytes) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t config_hash(const json& cfg) {
    return bytes_hash(cfg.dump());
}

std::string hash_string(std::uint64_t h) {
    char buf[19];
    std::snprintf(buf, sizeof buf, "0x%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// -------------------------------------------------------------------- files

void write_text_atomic(const std::string& path, const std::string& content) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot open for writing: " + tmp);
        out << content;
        if (!out) throw Error("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

void write_json_atomic(const std::string& path, const json& j) {
    write_text_atomic(path, j.dump(2) + "\n");
}

std::string read_text(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json(const std::string& path) {
    const std::string text = read_text(path);
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded()) throw ConfigError("invalid JSON in " + path);
    return j;
}

void write_series_csv(const std::string& path, const std::vector<double>& series,
                      const std::vector<std::pair<std::string, std::string>>& meta) {
    std::ostringstream os;
    for (const auto& [k, v] : meta) os << "# " << k << ": " << v << '\n';
    os << "delta_y\n";
    char buf[40];
    for (double x : series) {
        std::snprintf(buf, sizeof buf, "%.17g", x);
        os << buf << '\n';
    }
    write_text_atomic(path, os.str());
}

SeriesFile read_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open data file: " + path);
    SeriesFile f;
    std::string line;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line[0] == '#') {
            const auto colon = line.find(':');
            if (colon != std::string::npos) {
                std::string key = line.substr(1, colon - 1);
                std::string value = line.substr(colon + 1);
                auto trim = [](std::string& s) {
                    const auto b = s.find_first_not_of(" \t");
                    const auto e = s.find_last_not_of(" \t\r");
                    s = b == std::string::npos ? "" : s.substr(b, e - b + 1);
                };
                trim(key);
                trim(value);
                f.meta[key] = value;
            }
            continue;
        }
        if (!header_seen) {
            header_seen = true; // column header line
            continue;
        }
        try {
            f.series.push_back(std::stod(line));
        } catch (const std::exception&) {
            throw ConfigError("bad numeric row in " + path + ": " + line);
        }
    }
    if (f.series.empty()) throw ConfigError("no data rows in " + path);
    return f;
}

} // namespace ecfid
