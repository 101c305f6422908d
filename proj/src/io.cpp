#include "cape/io.hpp"

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "cape/errors.hpp"

namespace cape {

namespace {

std::string trim(std::string s) {
    const auto not_space = [](unsigned char c) { return !std::isspace(c); };
    s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
    s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
    return s;
}

std::vector<std::string> split_lines(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        out.push_back(line);
    }
    return out;
}

char detect_delimiter(const std::string& header) {
    for (char c : {',', '\t', ';'})
        if (header.find(c) != std::string::npos) return c;
    return ',';
}

std::vector<std::string> split(const std::string& line, char delim) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream in(line);
    while (std::getline(in, cell, delim)) out.push_back(trim(cell));
    if (!line.empty() && line.back() == delim) out.emplace_back();
    return out;
}

double parse_number(const std::string& s, std::size_t row, std::size_t col) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE)
        throw ConfigError("non-numeric CSV cell '" + s + "' at data row " + std::to_string(row + 1) + ", column " +
                          std::to_string(col + 1));
    return v;
}

}  // namespace

NumericTable parse_numeric_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ConfigError("CSV is empty");
    const char delim = detect_delimiter(lines[0]);
    NumericTable t;
    t.names = split(lines[0], delim);
    const std::size_t d = t.names.size();
    t.values.resize(static_cast<Eigen::Index>(lines.size() - 1), static_cast<Eigen::Index>(d));
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split(lines[r], delim);
        if (cells.size() != d)
            throw ConfigError("CSV row " + std::to_string(r) + " has " + std::to_string(cells.size()) +
                              " cells, expected " + std::to_string(d));
        for (std::size_t c = 0; c < d; ++c)
            t.values(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c)) = parse_number(cells[c], r - 1, c);
    }
    return t;
}

NumericTable read_numeric_csv(const std::filesystem::path& path) { return parse_numeric_csv(read_text_file(path)); }

InterventionalData parse_interventional_csv(const std::string& text) {
    const auto lines = split_lines(text);
    if (lines.empty()) throw ConfigError("CSV is empty");
    const char delim = detect_delimiter(lines[0]);
    const auto header = split(lines[0], delim);
    const auto meta = std::find(header.begin(), header.end(), "perturbation");
    if (meta == header.end()) throw ConfigError("interventional CSV needs a 'perturbation' column");
    const std::size_t meta_col = static_cast<std::size_t>(meta - header.begin());

    InterventionalData data;
    std::map<std::string, std::size_t> column_of;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (c == meta_col) continue;
        column_of[header[c]] = data.names.size();
        data.names.push_back(header[c]);
    }
    const std::size_t k = data.names.size();

    std::vector<std::vector<double>> control_rows;
    std::map<std::size_t, std::vector<std::vector<double>>> group_rows;
    std::vector<std::string> unknown;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const auto cells = split(lines[r], delim);
        if (cells.size() != header.size())
            throw ConfigError("CSV row " + std::to_string(r) + " has the wrong number of cells");
        std::vector<double> row;
        row.reserve(k);
        for (std::size_t c = 0; c < cells.size(); ++c)
            if (c != meta_col) row.push_back(parse_number(cells[c], r - 1, c));
        const std::string& label = cells[meta_col];
        if (label == "control" || label == "non-targeting") {
            control_rows.push_back(std::move(row));
        } else if (auto it = column_of.find(label); it != column_of.end()) {
            group_rows[it->second].push_back(std::move(row));
        } else if (std::find(unknown.begin(), unknown.end(), label) == unknown.end()) {
            unknown.push_back(label);
        }
    }
    auto to_matrix = [k](const std::vector<std::vector<double>>& rows) {
        Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(k));
        for (std::size_t r = 0; r < rows.size(); ++r)
            for (std::size_t c = 0; c < k; ++c) m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = rows[r][c];
        return m;
    };
    data.control = to_matrix(control_rows);
    for (const auto& [target, rows] : group_rows) data.groups.push_back({target, to_matrix(rows)});
    data.unknown_targets = std::move(unknown);
    return data;
}

InterventionalData read_interventional_csv(const std::filesystem::path& path) {
    return parse_interventional_csv(read_text_file(path));
}

std::vector<std::size_t> top_variance_columns(const Eigen::MatrixXd& x, std::size_t k) {
    const std::size_t d = static_cast<std::size_t>(x.cols());
    std::vector<std::pair<double, std::size_t>> var;
    for (std::size_t c = 0; c < d; ++c) {
        const auto col = x.col(static_cast<Eigen::Index>(c));
        const double mean = col.mean();
        var.push_back({(col.array() - mean).square().sum(), c});
    }
    std::sort(var.begin(), var.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    std::vector<std::size_t> out;
    for (std::size_t r = 0; r < std::min(k, d); ++r) out.push_back(var[r].second);
    std::sort(out.begin(), out.end());
    return out;
}

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& x, const std::vector<std::size_t>& cols) {
    Eigen::MatrixXd out(x.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c) out.col(static_cast<Eigen::Index>(c)) = x.col(static_cast<Eigen::Index>(cols[c]));
    return out;
}

InterventionalData select_columns(const InterventionalData& data, const std::vector<std::size_t>& cols) {
    InterventionalData out;
    std::vector<std::ptrdiff_t> new_index(data.names.size(), -1);
    for (std::size_t c = 0; c < cols.size(); ++c) {
        out.names.push_back(data.names.at(cols[c]));
        new_index[cols[c]] = static_cast<std::ptrdiff_t>(c);
    }
    out.control = select_columns(data.control, cols);
    for (const auto& g : data.groups)
        if (new_index[g.target] >= 0)
            out.groups.push_back({static_cast<std::size_t>(new_index[g.target]), select_columns(g.samples, cols)});
    out.unknown_targets = data.unknown_targets;
    return out;
}

json graph_to_json(const WeightedDag& w) {
    json edges = json::array();
    for (const auto& e : w.edges()) edges.push_back(json::array({e.i, e.j, w.weight(e.i, e.j)}));
    return json{{"d", w.d()}, {"names", w.names()}, {"edges", std::move(edges)}};
}

WeightedDag graph_from_json(const json& j) {
    try {
        const std::size_t d = j.at("d").get<std::size_t>();
        std::vector<std::string> names;
        if (j.contains("names")) names = j.at("names").get<std::vector<std::string>>();
        std::vector<std::tuple<std::size_t, std::size_t, double>> edges;
        for (const auto& e : j.at("edges")) {
            if (!e.is_array() || e.size() != 3) throw ConfigError("graph edge must be [i, j, weight]");
            edges.emplace_back(e[0].get<std::size_t>(), e[1].get<std::size_t>(), e[2].get<double>());
        }
        return WeightedDag::from_edges(d, edges, std::move(names));
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed graph JSON: ") + ex.what());
    }
}

json adjacency_to_json(const Adjacency& a, const std::vector<std::string>& names) {
    json edges = json::array();
    for (std::size_t i = 0; i < a.d(); ++i)
        for (std::size_t j = 0; j < a.d(); ++j)
            if (a(i, j)) edges.push_back(json::array({i, j, 1.0}));
    return json{{"d", a.d()}, {"names", names}, {"edges", std::move(edges)}};
}

Adjacency adjacency_from_json(const json& j) {
    try {
        const std::size_t d = j.at("d").get<std::size_t>();
        Adjacency a(d, 0);
        for (const auto& e : j.at("edges")) {
            const auto i = e.at(0).get<std::size_t>(), k = e.at(1).get<std::size_t>();
            if (i >= d || k >= d || i == k) throw ConfigError("effect graph edge out of range");
            if (e.size() < 3 || e[2].get<double>() != 0.0) a(i, k) = 1;
        }
        return a;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed graph JSON: ") + ex.what());
    }
}

json snapshot_to_json(const ParticleSet& pset) {
    json parts = json::array();
    for (const auto& p : pset.particles()) parts.push_back(graph_to_json(p));
    json out{{"particles", std::move(parts)},
             {"weights", std::vector<double>(pset.weights().begin(), pset.weights().end())}};
    if (pset.has_log_prior())
        out["log_prior"] = std::vector<double>(pset.log_prior().begin(), pset.log_prior().end());
    return out;
}

ParticleSet snapshot_from_json(const json& j) {
    try {
        std::vector<WeightedDag> parts;
        for (const auto& g : j.at("particles")) parts.push_back(graph_from_json(g));
        std::vector<double> weights;
        if (j.contains("weights")) {
            weights = j.at("weights").get<std::vector<double>>();
        } else {
            weights.assign(parts.size(), parts.empty() ? 0.0 : 1.0 / static_cast<double>(parts.size()));
        }
        std::vector<double> lp;
        if (j.contains("log_prior")) lp = j.at("log_prior").get<std::vector<double>>();
        return ParticleSet(std::move(parts), std::move(weights), std::move(lp));
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed particle snapshot: ") + ex.what());
    }
}

json record_to_json(const QueryRecord& r) {
    json out{{"round", r.round}, {"pair", json::array({r.i, r.j})}, {"label", index_of(r.label)}, {"policy", r.policy}};
    out["eig"] = r.eig ? json(*r.eig) : json(nullptr);
    if (r.frozen_feature) out["feature"] = *r.frozen_feature;
    return out;
}

QueryRecord record_from_json(const json& j) {
    try {
        QueryRecord r;
        r.round = j.at("round").get<int>();
        r.i = j.at("pair").at(0).get<std::size_t>();
        r.j = j.at("pair").at(1).get<std::size_t>();
        r.label = label_from_int(j.at("label").get<int>());
        r.policy = j.value("policy", std::string{});
        if (j.contains("eig") && !j.at("eig").is_null()) r.eig = j.at("eig").get<double>();
        if (j.contains("feature")) r.frozen_feature = j.at("feature").get<double>();
        return r;
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed history record: ") + ex.what());
    }
}

std::string read_text_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json read_json_file(const std::filesystem::path& path) {
    const std::string text = read_text_file(path);
    try {
        return json::parse(text);
    } catch (const json::exception& ex) {
        throw ConfigError("invalid JSON in '" + path.string() + "': " + ex.what());
    }
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".partial";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write '" + tmp.string() + "'");
        out << text;
        if (!out.flush()) throw std::runtime_error("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace cape
