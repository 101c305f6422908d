#include "cape/graph.hpp"

#include <string>
#include <tuple>

#include "cape/errors.hpp"

namespace cape {

Label label_from_int(int y) {
    if (y < 0 || y > 2) throw ContractError("label must be 0, 1 or 2, got " + std::to_string(y));
    return static_cast<Label>(y);
}

Adjacency adjacency_from_rows(const std::vector<std::vector<int>>& rows) {
    const std::size_t d = rows.size();
    Adjacency a(d);
    for (std::size_t i = 0; i < d; ++i) {
        if (rows[i].size() != d) throw ContractError("adjacency matrix is not square");
        for (std::size_t j = 0; j < d; ++j) a(i, j) = rows[i][j] != 0 ? 1 : 0;
    }
    return a;
}

bool is_acyclic(const Adjacency& a) {
    const std::size_t d = a.d();
    if (a.data().size() != d * d) throw ContractError("adjacency matrix is not square");
    std::vector<std::size_t> indegree(d, 0);
    for (std::size_t i = 0; i < d; ++i) {
        if (a(i, i) != 0) throw ContractError("adjacency matrix has a nonzero diagonal");
        for (std::size_t j = 0; j < d; ++j) indegree[j] += a(i, j) != 0;
    }
    std::vector<std::size_t> ready;
    for (std::size_t i = 0; i < d; ++i)
        if (indegree[i] == 0) ready.push_back(i);
    std::size_t peeled = 0;
    while (!ready.empty()) {
        const std::size_t n = ready.back();
        ready.pop_back();
        ++peeled;
        for (std::size_t j = 0; j < d; ++j)
            if (a(n, j) != 0 && --indegree[j] == 0) ready.push_back(j);
    }
    return peeled == d;
}

WeightedDag::WeightedDag(std::size_t d, std::vector<std::string> names)
    : d_(d), w_(d * d, 0.0) {
    set_names(std::move(names));
}

void WeightedDag::set_names(std::vector<std::string> names) {
    if (!names.empty() && names.size() != d_)
        throw ContractError("node name count does not match d");
    names_ = std::move(names);
}

WeightedDag WeightedDag::from_matrix(std::size_t d, std::vector<double> weights,
                                     std::vector<std::string> names) {
    if (weights.size() != d * d) throw ContractError("weight matrix is not D x D");
    WeightedDag g(d, std::move(names));
    g.w_ = std::move(weights);
    for (std::size_t i = 0; i < d; ++i)
        if (g.w_[i * d + i] != 0.0) throw ContractError("weight matrix has a nonzero diagonal");
    if (!is_acyclic(g.adjacency())) throw ContractError("weight matrix support is cyclic");
    return g;
}

WeightedDag WeightedDag::from_edges(
    std::size_t d, const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
    std::vector<std::string> names) {
    std::vector<double> w(d * d, 0.0);
    for (const auto& [i, j, value] : edges) {
        if (i >= d || j >= d) throw ContractError("edge endpoint out of range");
        w[i * d + j] = value;
    }
    return from_matrix(d, std::move(w), std::move(names));
}

std::size_t WeightedDag::edge_count() const {
    std::size_t n = 0;
    for (double v : w_) n += v != 0.0;
    return n;
}

std::vector<Pair> WeightedDag::edges() const {
    std::vector<Pair> out;
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = 0; j < d_; ++j)
            if (w_[i * d_ + j] != 0.0) out.push_back({i, j});
    return out;
}

Adjacency WeightedDag::adjacency() const {
    Adjacency a(d_);
    for (std::size_t k = 0; k < w_.size(); ++k) a.data()[k] = w_[k] != 0.0;
    return a;
}

bool WeightedDag::reaches(std::size_t from, std::size_t to) const {
    if (from == to) return true;
    std::vector<std::uint8_t> seen(d_, 0);
    std::vector<std::size_t> stack{from};
    seen[from] = 1;
    while (!stack.empty()) {
        const std::size_t n = stack.back();
        stack.pop_back();
        const double* row = w_.data() + n * d_;
        for (std::size_t j = 0; j < d_; ++j) {
            if (row[j] == 0.0 || seen[j]) continue;
            if (j == to) return true;
            seen[j] = 1;
            stack.push_back(j);
        }
    }
    return false;
}

void WeightedDag::check_index(std::size_t i, std::size_t j) const {
    if (i >= d_ || j >= d_) throw ContractError("node index out of range");
    if (i == j) throw ContractError("edit endpoints must differ");
}

bool WeightedDag::try_apply(const GraphEdit& e) {
    check_index(e.i, e.j);
    double& forward = w_[e.i * d_ + e.j];
    switch (e.kind) {
        case GraphEdit::Kind::add:
            if (forward != 0.0) throw ContractError("AddEdge on an existing edge");
            if (e.weight == 0.0) throw ContractError("AddEdge needs a nonzero weight");
            if (creates_cycle(e.i, e.j)) return false;
            forward = e.weight;
            return true;
        case GraphEdit::Kind::remove:
            if (forward == 0.0) throw ContractError("RemoveEdge on a missing edge");
            forward = 0.0;
            return true;
        case GraphEdit::Kind::flip: {
            if (forward == 0.0) throw ContractError("FlipEdge on a missing edge");
            const double value = forward;
            forward = 0.0;
            if (creates_cycle(e.j, e.i)) {
                forward = value;
                return false;
            }
            w_[e.j * d_ + e.i] = value;
            return true;
        }
        case GraphEdit::Kind::perturb:
            if (forward == 0.0) throw ContractError("PerturbWeight on a missing edge");
            if (e.weight == 0.0) throw ContractError("PerturbWeight needs a nonzero weight");
            forward = e.weight;
            return true;
    }
    return false;
}

bool WeightedDag::same_structure(const WeightedDag& other) const {
    if (d_ != other.d_) return false;
    for (std::size_t k = 0; k < w_.size(); ++k)
        if ((w_[k] != 0.0) != (other.w_[k] != 0.0)) return false;
    return true;
}

std::optional<WeightedDag> apply_edit(const WeightedDag& w, const GraphEdit& e) {
    WeightedDag out = w;
    if (!out.try_apply(e)) return std::nullopt;
    return out;
}

std::set<std::pair<std::size_t, std::size_t>> skeleton(const WeightedDag& w) {
    std::set<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t i = 0; i < w.d(); ++i)
        for (std::size_t j = i + 1; j < w.d(); ++j)
            if (w.adjacent(i, j)) out.emplace(i, j);
    return out;
}

Label true_label(const WeightedDag& w_star, std::size_t i, std::size_t j) {
    if (i == j) throw ContractError("true_label needs i != j");
    if (i >= w_star.d() || j >= w_star.d()) throw ContractError("node index out of range");
    if (w_star.has_edge(i, j)) return Label::forward;
    if (w_star.has_edge(j, i)) return Label::reverse;
    return Label::none;
}

Label target_label(const Adjacency& a, std::size_t i, std::size_t j) {
    if (i == j) throw ContractError("target_label needs i != j");
    const bool forward = a(i, j) != 0;
    const bool backward = a(j, i) != 0;
    if (forward && !backward) return Label::forward;
    if (backward && !forward) return Label::reverse;
    return Label::none;
}

std::vector<Pair> all_ordered_pairs(std::size_t d) {
    std::vector<Pair> out;
    out.reserve(d * (d > 0 ? d - 1 : 0));
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) out.push_back({i, j});
    return out;
}

}  // namespace cape
