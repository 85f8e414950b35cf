#ifndef ECFID_CONFIG_HPP
#define ECFID_CONFIG_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "ecfid/ecf.hpp"
#include "ecfid/estimators.hpp"
#include "ecfid/noise.hpp"
#include "ecfid/system.hpp"

namespace ecfid {

using nlohmann::json;

// ---- noise/system/grid configs (field names documented in docs/formats.md)

json noise_to_json(const NoiseModel& model);
NoiseModel noise_from_json(const json& cfg);

/// Map from parameter name to index in the packed eta vector, per family.
std::map<std::string, int> noise_param_names(const NoiseModel& model);

json system_spec_to_json(const SystemSpec& spec);
SystemSpec system_spec_from_json(const json& cfg);

json grid_to_json(const UGrid& grid);
UGrid grid_from_json(const json& cfg);

json weight_to_json(const WeightMatrix& w);

// ---- generic helpers

json vector_to_json(const Eigen::VectorXd& v);
Eigen::VectorXd vector_from_json(const json& a);
json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const json& a);

json result_to_json(const EstimationResult& r);

/// FNV-1a over the canonical (sorted-key) JSON dump; provenance, not crypto.
std::uint64_t config_hash(const json& cfg);
std::uint64_t bytes_hash(const std::string& bytes);
std::string hash_string(std::uint64_t h);

// ---- files

/// Single-column CSV with '#'-prefixed provenance lines before the header.
void write_series_csv(const std::string& path, const std::vector<double>& series,
                      const std::vector<std::pair<std::string, std::string>>& meta);

struct SeriesFile {
    std::vector<double> series;
    std::map<std::string, std::string> meta;
};
SeriesFile read_series_csv(const std::string& path);

/// Write-then-rename so readers never observe a partial file.
void write_text_atomic(const std::string& path, const std::string& content);
void write_json_atomic(const std::string& path, const json& j);

std::string read_text(const std::string& path);
json read_json(const std::string& path);

} // namespace ecfid

#endif
