#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "cape/graph.hpp"
#include "cape/oracle.hpp"
#include "cape/particles.hpp"

namespace cape {

using json = nlohmann::json;

struct NumericTable {
    std::vector<std::string> names;
    Eigen::MatrixXd values;  // rows = samples
};

/// Headered numeric CSV. The delimiter (comma, tab or semicolon) is taken
/// from the header line.
NumericTable read_numeric_csv(const std::filesystem::path& path);
NumericTable parse_numeric_csv(const std::string& text);

struct InterventionalData {
    std::vector<std::string> names;
    Eigen::MatrixXd control;
    std::vector<InterventionGroup> groups;
    /// Perturbation labels that name no measured column.
    std::vector<std::string> unknown_targets;
};

/// Headered CSV with a "perturbation" column: "control" (or
/// "non-targeting") marks control rows, anything else names the perturbed
/// column.
InterventionalData read_interventional_csv(const std::filesystem::path& path);
InterventionalData parse_interventional_csv(const std::string& text);

/// Indices of the k highest-variance columns, returned in column order.
std::vector<std::size_t> top_variance_columns(const Eigen::MatrixXd& x, std::size_t k);
Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& cols);
InterventionalData select_columns(const InterventionalData& data, const std::vector<std::size_t>& cols);

/// {"d": D, "names": [...], "edges": [[i, j, w], ...]}. Doubles are written
/// in shortest round-trip form, so reading back is bit-exact.
json graph_to_json(const WeightedDag& w);
WeightedDag graph_from_json(const json& j);
json adjacency_to_json(const Adjacency& a, const std::vector<std::string>& names = {});
Adjacency adjacency_from_json(const json& j);

/// {"particles": [graph, ...], "weights": [...], "log_prior": [...]}.
json snapshot_to_json(const ParticleSet& pset);
ParticleSet snapshot_from_json(const json& j);

json record_to_json(const QueryRecord& r);
QueryRecord record_from_json(const json& j);

json read_json_file(const std::filesystem::path& path);
std::string read_text_file(const std::filesystem::path& path);
/// Writes to "<path>.partial" and renames it into place.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace cape
