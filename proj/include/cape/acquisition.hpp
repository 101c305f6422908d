#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "cape/expert.hpp"
#include "cape/graph.hpp"
#include "cape/particles.hpp"
#include "cape/rng.hpp"

namespace cape {

/// Shannon entropy in nats, with 0 log 0 = 0.
double entropy3(const CategoricalDist3& p);

/// KL(p || q) in nats; +inf when q has a zero where p does not.
double kl3(const CategoricalDist3& p, const CategoricalDist3& q);

/// Per-particle likelihood table for one ordered pair.
std::vector<CategoricalDist3> particle_likelihoods(const ParticleSet& pset, std::size_t i, std::size_t j,
                                                   const ExpertParams& params);

/// p(y) = sum_s w_s p(y | W_s).
CategoricalDist3 predictive(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params);
CategoricalDist3 mixture(std::span<const double> weights, std::span<const CategoricalDist3> liks);

/// H(predictive) - sum_s w_s H(p_s), tiny negatives clamped to 0.
double eig(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params);
double eig_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks);

/// sum_y p(y) KL(q(.|y) || q) on the particle support, q(s|y) proportional
/// to w_s p_s(y). Independent evaluation of the same quantity as eig().
double eig_via_expected_kl(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params);
double eig_via_expected_kl_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks);

/// sum_s w_s KL(p_s || predictive).
double eig_mixture_kl(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params);
double eig_mixture_kl_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks);

/// Predictives and EIG for every ordered pair, computed once per round.
/// Features (when enabled) are evaluated against `pset` itself.
class PredictiveTable {
public:
    PredictiveTable(const ParticleSet& pset, const ExpertParams& params, unsigned threads = 1);
    /// Only the listed pairs (plus their mirrors) are evaluated.
    PredictiveTable(const ParticleSet& pset, const ExpertParams& params, const std::vector<Pair>& pairs,
                    unsigned threads = 1);

    std::size_t d() const { return d_; }
    bool has(std::size_t i, std::size_t j) const { return done_[i * d_ + j] != 0; }
    const CategoricalDist3& predictive(std::size_t i, std::size_t j) const;
    double eig(std::size_t i, std::size_t j) const;

private:
    void compute(const ParticleSet& pset, const ExpertParams& params, const std::vector<Pair>& unordered,
                 unsigned threads);

    std::size_t d_ = 0;
    std::vector<CategoricalDist3> pred_;
    std::vector<double> eig_;
    std::vector<char> done_;
};

enum class ScreenMode { ordered, unordered };
std::string to_string(ScreenMode m);
ScreenMode screen_mode_from_string(const std::string& s);

struct CandidateSet {
    std::vector<Pair> pairs;
    std::vector<double> scores;
    bool empty() const { return pairs.empty(); }
    std::size_t size() const { return pairs.size(); }
};

/// u_ij = p_ij (1 - p_ij).
double uncertainty_score(double p);

/// Top-k pairs by u over the edge marginals, ties broken by (i, j). In
/// unordered mode a pair {i, j} (reported as i < j) scores max(u_ij, u_ji).
/// Pairs in `excluded` are skipped. k >= number of pairs keeps them all.
CandidateSet screen(const Square<double>& marginals, std::size_t k, ScreenMode mode = ScreenMode::ordered,
                    const std::vector<Pair>& excluded = {});

enum class Policy { eig, uncertainty, random, static_eig };
std::string to_string(Policy p);
Policy policy_from_string(const std::string& s);

/// All ordered pairs sorted by descending round-0 EIG, ties by (i, j).
std::vector<Pair> static_ranking(const PredictiveTable& table);
std::vector<Pair> static_ranking(const ParticleSet& pset, const ExpertParams& params);

struct Selection {
    Pair pair;
    double u = 0.0;
    std::optional<double> eig;
};

/// EIG: argmax over candidates (ties lexicographic); UNC: first candidate;
/// RND: uniform draw; STE: first pair of `ranking` not in `queried`.
/// Throws CandidatesExhausted when nothing is left to ask.
Selection select_query(const CandidateSet& candidates, Policy policy, const PredictiveTable* table, StreamRng& rng,
                       const std::vector<Pair>* ranking = nullptr, const std::vector<Pair>* queried = nullptr);

}  // namespace cape
