#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cape/graph.hpp"
#include "cape/particles.hpp"
#include "cape/rng.hpp"

namespace cape {

/// Random topological order, then each forward pair gets an edge with
/// probability edge_prob and weight Uniform[weight_low, weight_high].
WeightedDag erdos_renyi_dag(std::size_t d, double edge_prob, double weight_low, double weight_high, StreamRng& rng,
                            std::vector<std::string> names = {});

struct PerturbOptions {
    double flip_prob = 0.10;
    double addremove_prob = 0.05;
    double weight_noise_sd = 0.20;
    /// Weight for edges created by the add/remove step.
    double add_weight_low = 0.5;
    double add_weight_high = 1.5;
};

/// One noisy copy of W*: flips on existing edges (skipped when cyclic), then
/// add/remove on each unordered pair, then Normal noise on every weight.
WeightedDag perturb_graph(const WeightedDag& w_star, const PerturbOptions& opts, StreamRng& rng);

/// S perturbed copies, particle s drawn from substream (prior, s).
ParticleSet perturbed_prior(const WeightedDag& w_star, const PerturbOptions& opts, std::size_t s,
                            const RngFactory& rngs);

struct BootstrapOptions {
    std::size_t particles = 500;
    std::size_t max_parents = 3;
    std::size_t corr_k = 6;
    double ridge = 1e-3;
    double coef_threshold = 1e-3;
    /// Report coefficients on the original column scale instead of the
    /// standardized one.
    bool raw_scale_weights = false;
    /// Use this variable order for every particle instead of a random one.
    std::optional<std::vector<std::size_t>> fixed_order;
    unsigned threads = 1;

    static BootstrapOptions sachs();
    static BootstrapOptions causalbench();
};

/// Pearson correlation; 0 when either column is constant.
double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b);

/// One bootstrap DAG: resample rows, draw an order, screen parents by
/// |corr|, cap at max_parents, fit ridge on standardized columns.
WeightedDag bootstrap_dag(const Eigen::MatrixXd& x, const BootstrapOptions& opts, StreamRng& rng,
                          const std::vector<std::string>& names = {});

/// S bootstrap DAGs with uniform weights; particle s uses substream (prior, s).
ParticleSet bootstrap_linear_prior(const Eigen::MatrixXd& x, const BootstrapOptions& opts, const RngFactory& rngs,
                                   const std::vector<std::string>& names = {});

}  // namespace cape
