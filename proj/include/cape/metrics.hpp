#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cape/acquisition.hpp"
#include "cape/expert.hpp"
#include "cape/graph.hpp"
#include "cape/particles.hpp"

namespace cape {

/// Mean entropy of the predictive over `pairs`.
double avg_predictive_entropy(const PredictiveTable& table, const std::vector<Pair>& pairs);
double avg_predictive_entropy(const ParticleSet& pset, const std::vector<Pair>& pairs, const ExpertParams& params);

/// Mean predictive mass on the target label over all ordered pairs. The
/// target label comes from `target` (bidirectional entries read as 2).
double etcp(const PredictiveTable& table, const Adjacency& target);
double etcp(const ParticleSet& pset, const WeightedDag& w_star, const ExpertParams& params);

/// Mean over ordered pairs of sum_y (p(y) - 1[y = y*])^2.
double brier(const PredictiveTable& table, const Adjacency& target);
double brier(const ParticleSet& pset, const WeightedDag& w_star, const ExpertParams& params);

enum class ShdMode {
    formula,  // ordered-entry mismatches; a reversed edge counts 2
    flip1,    // one per unordered pair that differs; a reversed edge counts 1
};
std::string to_string(ShdMode m);
ShdMode shd_mode_from_string(const std::string& s);

double shd(const Adjacency& a, const Adjacency& target, ShdMode mode = ShdMode::formula);
/// Posterior-weighted SHD.
double shd_posterior(const ParticleSet& pset, const Adjacency& target, ShdMode mode = ShdMode::formula);

struct F1Parts {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

/// Both sets empty gives F1 = 1; an empty side otherwise gives 0 for the
/// undefined ratio; precision + recall = 0 gives F1 = 0.
F1Parts skeleton_f1(const Adjacency& a, const Adjacency& target);
F1Parts orientation_f1(const Adjacency& a, const Adjacency& target);
double skeleton_f1_posterior(const ParticleSet& pset, const Adjacency& target);
double orientation_f1_posterior(const ParticleSet& pset, const Adjacency& target);

/// Ranking metrics over parallel score / label lists. Zero positives (or,
/// for AUROC, zero negatives) yield NaN and a logged warning.
double average_precision(const std::vector<double>& scores, const std::vector<int>& labels);
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);
/// k = 0 means "number of positives". Ties keep list order.
double topk_precision(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t k = 0);

/// The same over ordered off-diagonal pairs (row-major order) of a score
/// matrix against a binary target.
double directed_auprc(const Square<double>& scores, const Adjacency& target);
double directed_auroc(const Square<double>& scores, const Adjacency& target);
double directed_topk_precision(const Square<double>& scores, const Adjacency& target, std::size_t k = 0);

/// pi_ij = P(i -> j) / P(i and j adjacent); 0.5 where the pair is never
/// adjacent.
Square<double> orientation_marginals(const ParticleSet& pset);

}  // namespace cape
