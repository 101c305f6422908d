#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

namespace cape {

/// Ordered node pair (i, j), i != j.
struct Pair {
    std::size_t i = 0;
    std::size_t j = 0;
    auto operator<=>(const Pair&) const = default;
};

/// Expert answer for an ordered pair (i, j).
enum class Label : std::uint8_t {
    reverse = 0,  // j -> i
    forward = 1,  // i -> j
    none = 2,     // no direct edge
};

inline constexpr std::size_t index_of(Label y) { return static_cast<std::size_t>(y); }
Label label_from_int(int y);

/// Dense row-major D x D matrix.
template <class T>
class Square {
public:
    Square() = default;
    explicit Square(std::size_t d, T fill = T{}) : d_(d), v_(d * d, fill) {}

    std::size_t d() const { return d_; }
    T& operator()(std::size_t i, std::size_t j) { return v_[i * d_ + j]; }
    const T& operator()(std::size_t i, std::size_t j) const { return v_[i * d_ + j]; }
    std::span<const T> row(std::size_t i) const { return {v_.data() + i * d_, d_}; }
    std::span<const T> data() const { return v_; }
    std::span<T> data() { return v_; }
    bool operator==(const Square&) const = default;

private:
    std::size_t d_ = 0;
    std::vector<T> v_;
};

/// Binary adjacency (possibly cyclic, e.g. an effect graph).
using Adjacency = Square<std::uint8_t>;

/// Builds an adjacency from nested rows; throws ContractError if not square.
Adjacency adjacency_from_rows(const std::vector<std::vector<int>>& rows);

/// True iff the adjacency has no directed cycle. Kahn peeling, O(D^2).
/// Throws ContractError on a nonzero diagonal.
bool is_acyclic(const Adjacency& a);

struct GraphEdit {
    enum class Kind { add, remove, flip, perturb };
    Kind kind;
    std::size_t i;
    std::size_t j;
    double weight = 0.0;  // AddEdge / PerturbWeight only
};

/// Weighted DAG: zero diagonal and acyclic support. Every mutating path
/// re-establishes both invariants, so holders never see a cyclic graph.
class WeightedDag {
public:
    WeightedDag() = default;
    explicit WeightedDag(std::size_t d, std::vector<std::string> names = {});

    /// Validating constructor from a dense row-major matrix.
    static WeightedDag from_matrix(std::size_t d, std::vector<double> weights,
                                   std::vector<std::string> names = {});
    /// Validating constructor from an edge list.
    static WeightedDag from_edges(std::size_t d,
                                  const std::vector<std::tuple<std::size_t, std::size_t, double>>& edges,
                                  std::vector<std::string> names = {});

    std::size_t d() const { return d_; }
    double weight(std::size_t i, std::size_t j) const { return w_[i * d_ + j]; }
    bool has_edge(std::size_t i, std::size_t j) const { return w_[i * d_ + j] != 0.0; }
    bool adjacent(std::size_t i, std::size_t j) const { return has_edge(i, j) || has_edge(j, i); }
    std::span<const double> weights() const { return w_; }
    const std::vector<std::string>& names() const { return names_; }
    void set_names(std::vector<std::string> names);

    std::size_t edge_count() const;
    std::vector<Pair> edges() const;
    Adjacency adjacency() const;

    /// True iff a directed path from -> ... -> to exists (from == to counts).
    bool reaches(std::size_t from, std::size_t to) const;
    /// Would installing from -> to close a directed cycle?
    bool creates_cycle(std::size_t from, std::size_t to) const { return reaches(to, from); }

    /// Applies the edit in place if the result is acyclic; returns false (and
    /// leaves *this untouched) otherwise. Throws ContractError when the edit's
    /// preconditions are violated.
    bool try_apply(const GraphEdit& e);

    bool same_structure(const WeightedDag& other) const;
    bool operator==(const WeightedDag& other) const = default;

private:
    void check_index(std::size_t i, std::size_t j) const;

    std::size_t d_ = 0;
    std::vector<double> w_;
    std::vector<std::string> names_;
};

/// Returns the edited graph, or nullopt when the edit would create a cycle.
std::optional<WeightedDag> apply_edit(const WeightedDag& w, const GraphEdit& e);

/// Undirected skeleton as {min, max} pairs.
std::set<std::pair<std::size_t, std::size_t>> skeleton(const WeightedDag& w);

/// 1 if W*_ij != 0, 0 if W*_ji != 0, 2 otherwise.
Label true_label(const WeightedDag& w_star, std::size_t i, std::size_t j);

/// Label implied by a binary (possibly cyclic) target graph; bidirectional
/// pairs are ambiguous and map to "no directed edge".
Label target_label(const Adjacency& a, std::size_t i, std::size_t j);

/// All ordered pairs (i, j), i != j, in lexicographic order.
std::vector<Pair> all_ordered_pairs(std::size_t d);

}  // namespace cape
