#pragma once

#include <array>
#include <cstddef>
#include <string>

#include "cape/graph.hpp"
#include "cape/particles.hpp"

namespace cape {

enum class FeatureKind { none, posterior_log_odds, v_structure, cycle_risk, linear };

std::string to_string(FeatureKind k);
FeatureKind feature_kind_from_string(const std::string& s);

/// Expert hyperparameters theta = (beta_edge, beta_dir, lambda, gamma) plus
/// the link constant epsilon and the class-probability floor.
struct ExpertParams {
    double beta_edge = 10.0;
    double beta_dir = 10.0;
    double lambda = 0.0;
    double gamma = 0.1;
    double epsilon = 1e-6;
    double prob_floor = 1e-9;
    FeatureKind feature = FeatureKind::none;
    /// Coefficients for FeatureKind::linear, in the order
    /// (posterior log-odds, v-structure, cycle risk).
    std::array<double, 3> alpha{1.0, 1.0, 1.0};
    /// epsilon' inside the posterior log-odds feature.
    double odds_epsilon = 1e-6;

    void validate() const;
    /// True when scores depend on the posterior (lambda > 0 with a feature).
    bool needs_features() const { return lambda > 0.0 && feature != FeatureKind::none; }
};

/// Probability vector over labels {0, 1, 2}.
struct CategoricalDist3 {
    std::array<double, 3> p{0.0, 0.0, 0.0};

    double operator[](Label y) const { return p[index_of(y)]; }
    double operator[](std::size_t y) const { return p[y]; }
};

/// Clamps every class to at least `floor` and rescales the unclamped mass so
/// the result still sums to one; repeats until no class falls below the floor.
CategoricalDist3 apply_floor(CategoricalDist3 dist, double floor);

double sigmoid(double x);
double log_sigmoid(double x);

/// phi_{i->j} for the configured feature, computed from a posterior.
double feature_value(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params);

double feature_posterior_log_odds(const ParticleSet& pset, std::size_t i, std::size_t j, double eps_odds);
double feature_v_structure(const ParticleSet& pset, std::size_t i, std::size_t j);
double feature_cycle_risk(const ParticleSet& pset, std::size_t i, std::size_t j);

/// s_{i->j}(W) = log(eps + |W_ij| / gamma) + lambda * phi_{i->j}. `feature_ctx`
/// is required iff params.needs_features(); throws ConfigError otherwise.
double direction_score(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                       const ParticleSet* feature_ctx = nullptr);

struct PairStats {
    double a = 0.0;  // max(s_ij, s_ji): evidence that some edge exists
    double d = 0.0;  // s_ij - s_ji: evidence for i -> j over j -> i
};

PairStats pair_stats(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                     const ParticleSet* feature_ctx = nullptr);

/// p_theta(Y_ij = . | W), floored.
CategoricalDist3 likelihood(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                            const ParticleSet* feature_ctx = nullptr);

/// Core of the expert model in terms of the only inputs it depends on: the
/// two weights of the pair and phi_{i->j} (phi_{j->i} = -phi_{i->j} for every
/// supported feature).
CategoricalDist3 likelihood_from_weights(double w_ij, double w_ji, double phi_ij, const ExpertParams& params);

/// log p_theta(Y_ij = y | W). Uses log-sigmoid forms when the floor is zero so
/// that extreme scores stay finite.
double log_likelihood_from_weights(double w_ij, double w_ji, double phi_ij, const ExpertParams& params,
                                   Label y);

}  // namespace cape
