#include "cape/expert.hpp"

#include <algorithm>
#include <cmath>

#include "cape/errors.hpp"

namespace cape {

std::string to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::none: return "none";
        case FeatureKind::posterior_log_odds: return "posterior_log_odds";
        case FeatureKind::v_structure: return "v_structure";
        case FeatureKind::cycle_risk: return "cycle_risk";
        case FeatureKind::linear: return "linear";
    }
    return "none";
}

FeatureKind feature_kind_from_string(const std::string& s) {
    if (s == "none") return FeatureKind::none;
    if (s == "posterior_log_odds") return FeatureKind::posterior_log_odds;
    if (s == "v_structure") return FeatureKind::v_structure;
    if (s == "cycle_risk") return FeatureKind::cycle_risk;
    if (s == "linear") return FeatureKind::linear;
    throw ConfigError("unknown expert feature kind '" + s + "'");
}

void ExpertParams::validate() const {
    // beta = 0 is admitted: it is the uninformative-expert limit.
    if (!(beta_edge >= 0.0) || !(beta_dir >= 0.0)) throw ConfigError("expert betas must be >= 0");
    if (!(gamma > 0.0)) throw ConfigError("expert gamma must be > 0");
    if (!(epsilon > 0.0)) throw ConfigError("expert epsilon must be > 0");
    if (!(lambda >= 0.0)) throw ConfigError("expert lambda must be >= 0");
    if (!(prob_floor >= 0.0 && prob_floor < 1.0 / 3.0)) throw ConfigError("expert prob_floor must be in [0, 1/3)");
    if (!(odds_epsilon > 0.0)) throw ConfigError("expert odds_epsilon must be > 0");
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double log_sigmoid(double x) {
    if (x >= 0.0) return -std::log1p(std::exp(-x));
    return x - std::log1p(std::exp(x));
}

CategoricalDist3 apply_floor(CategoricalDist3 dist, double floor) {
    if (floor <= 0.0) return dist;
    const auto raw = dist.p;
    std::array<bool, 3> clamped{false, false, false};
    for (int pass = 0; pass < 3; ++pass) {
        double free_mass = 1.0;
        double raw_unclamped = 0.0;
        for (std::size_t y = 0; y < 3; ++y) {
            if (clamped[y]) free_mass -= floor;
            else raw_unclamped += raw[y];
        }
        bool changed = false;
        for (std::size_t y = 0; y < 3; ++y) {
            if (clamped[y]) {
                dist.p[y] = floor;
                continue;
            }
            dist.p[y] = raw[y] * free_mass / raw_unclamped;
            if (dist.p[y] < floor) {
                clamped[y] = true;
                changed = true;
            }
        }
        if (!changed) break;
    }
    for (std::size_t y = 0; y < 3; ++y)
        if (clamped[y]) dist.p[y] = floor;
    return dist;
}

double feature_posterior_log_odds(const ParticleSet& pset, std::size_t i, std::size_t j, double eps_odds) {
    double forward = 0.0;
    double backward = 0.0;
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const auto& w = pset.particle(s);
        if (w.has_edge(i, j) && !w.has_edge(j, i)) forward += pset.weight(s);
        if (w.has_edge(j, i) && !w.has_edge(i, j)) backward += pset.weight(s);
    }
    return std::log((forward + eps_odds) / (backward + eps_odds));
}

double feature_v_structure(const ParticleSet& pset, std::size_t i, std::size_t j) {
    const std::size_t d = pset.d();
    if (d < 3) return 0.0;
    double total = 0.0;
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const auto& w = pset.particle(s);
        int colliders = 0;
        for (std::size_t k = 0; k < d; ++k) {
            if (k == i || k == j) continue;
            if (w.has_edge(i, j) && w.has_edge(k, j) && !w.adjacent(i, k)) ++colliders;
            if (w.has_edge(j, i) && w.has_edge(k, i) && !w.adjacent(j, k)) --colliders;
        }
        total += pset.weight(s) * colliders;
    }
    return total / static_cast<double>(d - 2);
}

double feature_cycle_risk(const ParticleSet& pset, std::size_t i, std::size_t j) {
    double risk_reverse = 0.0;  // adding j -> i closes a cycle
    double risk_forward = 0.0;  // adding i -> j closes a cycle
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const auto& w = pset.particle(s);
        if (!w.has_edge(j, i) && w.reaches(i, j)) risk_reverse += pset.weight(s);
        if (!w.has_edge(i, j) && w.reaches(j, i)) risk_forward += pset.weight(s);
    }
    return risk_reverse - risk_forward;
}

double feature_value(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params) {
    switch (params.feature) {
        case FeatureKind::none: return 0.0;
        case FeatureKind::posterior_log_odds: return feature_posterior_log_odds(pset, i, j, params.odds_epsilon);
        case FeatureKind::v_structure: return feature_v_structure(pset, i, j);
        case FeatureKind::cycle_risk: return feature_cycle_risk(pset, i, j);
        case FeatureKind::linear:
            return params.alpha[0] * feature_posterior_log_odds(pset, i, j, params.odds_epsilon) +
                   params.alpha[1] * feature_v_structure(pset, i, j) +
                   params.alpha[2] * feature_cycle_risk(pset, i, j);
    }
    return 0.0;
}

namespace {

double resolve_feature(std::size_t i, std::size_t j, const ExpertParams& params, const ParticleSet* ctx) {
    if (!params.needs_features()) return 0.0;
    if (ctx == nullptr)
        throw ConfigError("expert feature '" + to_string(params.feature) + "' needs a posterior context");
    return feature_value(*ctx, i, j, params);
}

inline double link(double w, const ExpertParams& params) {
    return std::log(params.epsilon + std::abs(w) / params.gamma);
}

PairStats stats_from_weights(double w_ij, double w_ji, double phi_ij, const ExpertParams& params) {
    const double s_ij = link(w_ij, params) + params.lambda * phi_ij;
    const double s_ji = link(w_ji, params) - params.lambda * phi_ij;
    return {std::max(s_ij, s_ji), s_ij - s_ji};
}

void check_pair(const WeightedDag& w, std::size_t i, std::size_t j) {
    if (i == j) throw ContractError("expert model needs i != j");
    if (i >= w.d() || j >= w.d()) throw ContractError("node index out of range");
}

}  // namespace

double direction_score(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                       const ParticleSet* feature_ctx) {
    check_pair(w, i, j);
    const double phi = resolve_feature(i, j, params, feature_ctx);
    return link(w.weight(i, j), params) + params.lambda * phi;
}

PairStats pair_stats(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                     const ParticleSet* feature_ctx) {
    check_pair(w, i, j);
    const double phi = resolve_feature(i, j, params, feature_ctx);
    return stats_from_weights(w.weight(i, j), w.weight(j, i), phi, params);
}

CategoricalDist3 likelihood_from_weights(double w_ij, double w_ji, double phi_ij, const ExpertParams& params) {
    const PairStats st = stats_from_weights(w_ij, w_ji, phi_ij, params);
    const double p_edge = sigmoid(params.beta_edge * st.a);
    const double p_dir = sigmoid(params.beta_dir * st.d);
    const double p_rev = sigmoid(-params.beta_dir * st.d);
    CategoricalDist3 out{{p_edge * p_rev, p_edge * p_dir, sigmoid(-params.beta_edge * st.a)}};
    return apply_floor(out, params.prob_floor);
}

double log_likelihood_from_weights(double w_ij, double w_ji, double phi_ij, const ExpertParams& params,
                                   Label y) {
    if (params.prob_floor > 0.0) return std::log(likelihood_from_weights(w_ij, w_ji, phi_ij, params)[y]);
    const PairStats st = stats_from_weights(w_ij, w_ji, phi_ij, params);
    switch (y) {
        case Label::forward: return log_sigmoid(params.beta_edge * st.a) + log_sigmoid(params.beta_dir * st.d);
        case Label::reverse: return log_sigmoid(params.beta_edge * st.a) + log_sigmoid(-params.beta_dir * st.d);
        case Label::none: return log_sigmoid(-params.beta_edge * st.a);
    }
    return 0.0;
}

CategoricalDist3 likelihood(const WeightedDag& w, std::size_t i, std::size_t j, const ExpertParams& params,
                            const ParticleSet* feature_ctx) {
    check_pair(w, i, j);
    const double phi = resolve_feature(i, j, params, feature_ctx);
    return likelihood_from_weights(w.weight(i, j), w.weight(j, i), phi, params);
}

}  // namespace cape
