#include "cape/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <thread>

#include "cape/errors.hpp"

namespace cape {

double entropy3(const CategoricalDist3& p) {
    double h = 0.0;
    for (double v : p.p)
        if (v > 0.0) h -= v * std::log(v);
    return h;
}

double kl3(const CategoricalDist3& p, const CategoricalDist3& q) {
    double kl = 0.0;
    for (std::size_t y = 0; y < 3; ++y) {
        if (p.p[y] <= 0.0) continue;
        if (q.p[y] <= 0.0) return std::numeric_limits<double>::infinity();
        kl += p.p[y] * std::log(p.p[y] / q.p[y]);
    }
    return kl;
}

std::vector<CategoricalDist3> particle_likelihoods(const ParticleSet& pset, std::size_t i, std::size_t j,
                                                   const ExpertParams& params) {
    if (i == j || i >= pset.d() || j >= pset.d()) throw ContractError("invalid query pair");
    const double phi = params.needs_features() ? feature_value(pset, i, j, params) : 0.0;
    std::vector<CategoricalDist3> out(pset.size());
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const auto& w = pset.particle(s);
        out[s] = likelihood_from_weights(w.weight(i, j), w.weight(j, i), phi, params);
    }
    return out;
}

CategoricalDist3 mixture(std::span<const double> weights, std::span<const CategoricalDist3> liks) {
    CategoricalDist3 p;
    for (std::size_t s = 0; s < weights.size(); ++s)
        for (std::size_t y = 0; y < 3; ++y) p.p[y] += weights[s] * liks[s].p[y];
    return p;
}

CategoricalDist3 predictive(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params) {
    const auto liks = particle_likelihoods(pset, i, j, params);
    return mixture(pset.weights(), liks);
}

double eig_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks) {
    const double marginal = entropy3(mixture(weights, liks));
    double conditional = 0.0;
    for (std::size_t s = 0; s < weights.size(); ++s) conditional += weights[s] * entropy3(liks[s]);
    const double v = marginal - conditional;
    return v < 0.0 ? 0.0 : v;
}

double eig(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params) {
    const auto liks = particle_likelihoods(pset, i, j, params);
    return eig_from_table(pset.weights(), liks);
}

double eig_via_expected_kl_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks) {
    const std::size_t n = weights.size();
    double total = 0.0;
    std::vector<double> post(n);
    for (std::size_t y = 0; y < 3; ++y) {
        double evidence = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            post[s] = weights[s] * liks[s].p[y];
            evidence += post[s];
        }
        if (evidence <= 0.0) continue;
        double kl = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            const double q = post[s] / evidence;
            if (q > 0.0) kl += q * std::log(q / weights[s]);
        }
        total += evidence * kl;
    }
    return total;
}

double eig_via_expected_kl(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params) {
    const auto liks = particle_likelihoods(pset, i, j, params);
    return eig_via_expected_kl_from_table(pset.weights(), liks);
}

double eig_mixture_kl_from_table(std::span<const double> weights, std::span<const CategoricalDist3> liks) {
    const CategoricalDist3 p = mixture(weights, liks);
    double total = 0.0;
    for (std::size_t s = 0; s < weights.size(); ++s)
        if (weights[s] > 0.0) total += weights[s] * kl3(liks[s], p);
    return total;
}

double eig_mixture_kl(const ParticleSet& pset, std::size_t i, std::size_t j, const ExpertParams& params) {
    const auto liks = particle_likelihoods(pset, i, j, params);
    return eig_mixture_kl_from_table(pset.weights(), liks);
}

PredictiveTable::PredictiveTable(const ParticleSet& pset, const ExpertParams& params, unsigned threads)
    : d_(pset.d()), pred_(d_ * d_), eig_(d_ * d_, 0.0), done_(d_ * d_, 0) {
    std::vector<Pair> unordered;
    for (std::size_t i = 0; i < d_; ++i)
        for (std::size_t j = i + 1; j < d_; ++j) unordered.push_back({i, j});
    compute(pset, params, unordered, threads);
}

PredictiveTable::PredictiveTable(const ParticleSet& pset, const ExpertParams& params, const std::vector<Pair>& pairs,
                                 unsigned threads)
    : d_(pset.d()), pred_(d_ * d_), eig_(d_ * d_, 0.0), done_(d_ * d_, 0) {
    std::set<Pair> unordered;
    for (const auto& p : pairs) {
        if (p.i == p.j || p.i >= d_ || p.j >= d_) throw ContractError("invalid pair in predictive table request");
        unordered.insert({std::min(p.i, p.j), std::max(p.i, p.j)});
    }
    compute(pset, params, {unordered.begin(), unordered.end()}, threads);
}

void PredictiveTable::compute(const ParticleSet& pset, const ExpertParams& params, const std::vector<Pair>& unordered,
                              unsigned threads) {
    const auto weights = pset.weights();
    auto work = [&](std::size_t begin, std::size_t end) {
        std::vector<CategoricalDist3> liks(pset.size());
        for (std::size_t k = begin; k < end; ++k) {
            const auto [i, j] = unordered[k];
            const double phi = params.needs_features() ? feature_value(pset, i, j, params) : 0.0;
            for (std::size_t s = 0; s < pset.size(); ++s) {
                const auto& w = pset.particle(s);
                liks[s] = likelihood_from_weights(w.weight(i, j), w.weight(j, i), phi, params);
            }
            const CategoricalDist3 p = mixture(weights, liks);
            const double e = eig_from_table(weights, liks);
            pred_[i * d_ + j] = p;
            pred_[j * d_ + i] = CategoricalDist3{{p.p[1], p.p[0], p.p[2]}};
            eig_[i * d_ + j] = eig_[j * d_ + i] = e;
            done_[i * d_ + j] = done_[j * d_ + i] = 1;
        }
    };
    const std::size_t n = unordered.size();
    const std::size_t workers = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(n, 1));
    if (workers == 1) {
        work(0, n);
        return;
    }
    std::vector<std::thread> pool;
    const std::size_t chunk = (n + workers - 1) / workers;
    for (std::size_t t = 0; t < workers; ++t) {
        const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
        pool.emplace_back(work, b, e);
    }
    for (auto& th : pool) th.join();
}

const CategoricalDist3& PredictiveTable::predictive(std::size_t i, std::size_t j) const {
    if (i >= d_ || j >= d_ || !has(i, j)) throw ContractError("pair not present in predictive table");
    return pred_[i * d_ + j];
}

double PredictiveTable::eig(std::size_t i, std::size_t j) const {
    if (i >= d_ || j >= d_ || !has(i, j)) throw ContractError("pair not present in predictive table");
    return eig_[i * d_ + j];
}

std::string to_string(ScreenMode m) { return m == ScreenMode::ordered ? "ordered" : "unordered"; }

ScreenMode screen_mode_from_string(const std::string& s) {
    if (s == "ordered") return ScreenMode::ordered;
    if (s == "unordered") return ScreenMode::unordered;
    throw ConfigError("unknown screen mode '" + s + "'");
}

double uncertainty_score(double p) { return p * (1.0 - p); }

CandidateSet screen(const Square<double>& marginals, std::size_t k, ScreenMode mode, const std::vector<Pair>& excluded) {
    if (k < 1) throw ConfigError("screen_k must be >= 1");
    const std::size_t d = marginals.d();
    const std::set<Pair> skip(excluded.begin(), excluded.end());
    std::vector<std::pair<double, Pair>> scored;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            if (mode == ScreenMode::ordered) {
                if (skip.count({i, j})) continue;
                scored.push_back({uncertainty_score(marginals(i, j)), {i, j}});
            } else if (i < j) {
                if (skip.count({i, j}) || skip.count({j, i})) continue;
                scored.push_back(
                    {std::max(uncertainty_score(marginals(i, j)), uncertainty_score(marginals(j, i))), {i, j}});
            }
        }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.first != b.first) return a.first > b.first;
        return a.second < b.second;
    });
    if (scored.size() > k) scored.resize(k);
    CandidateSet out;
    for (const auto& [u, p] : scored) {
        out.pairs.push_back(p);
        out.scores.push_back(u);
    }
    return out;
}

std::string to_string(Policy p) {
    switch (p) {
        case Policy::eig: return "EIG";
        case Policy::uncertainty: return "UNC";
        case Policy::random: return "RND";
        case Policy::static_eig: return "STE";
    }
    return "EIG";
}

Policy policy_from_string(const std::string& s) {
    if (s == "EIG") return Policy::eig;
    if (s == "UNC") return Policy::uncertainty;
    if (s == "RND") return Policy::random;
    if (s == "STE") return Policy::static_eig;
    throw ConfigError("unknown policy '" + s + "' (expected EIG, UNC, RND or STE)");
}

std::vector<Pair> static_ranking(const PredictiveTable& table) {
    auto pairs = all_ordered_pairs(table.d());
    std::stable_sort(pairs.begin(), pairs.end(),
                     [&](const Pair& a, const Pair& b) { return table.eig(a.i, a.j) > table.eig(b.i, b.j); });
    return pairs;
}

std::vector<Pair> static_ranking(const ParticleSet& pset, const ExpertParams& params) {
    return static_ranking(PredictiveTable(pset, params));
}

Selection select_query(const CandidateSet& candidates, Policy policy, const PredictiveTable* table, StreamRng& rng,
                       const std::vector<Pair>* ranking, const std::vector<Pair>* queried) {
    auto score_of = [&](const Pair& p) {
        for (std::size_t k = 0; k < candidates.size(); ++k)
            if (candidates.pairs[k] == p) return candidates.scores[k];
        return 0.0;
    };
    auto eig_of = [&](const Pair& p) -> std::optional<double> {
        if (table && table->has(p.i, p.j)) return table->eig(p.i, p.j);
        return std::nullopt;
    };

    if (policy == Policy::static_eig) {
        if (!ranking) throw ContractError("STE policy needs a static ranking");
        const std::set<Pair> done = queried ? std::set<Pair>(queried->begin(), queried->end()) : std::set<Pair>{};
        for (const auto& p : *ranking)
            if (!done.count(p)) return {p, score_of(p), eig_of(p)};
        throw CandidatesExhausted("static ranking exhausted: every pair has been queried");
    }
    if (candidates.empty()) throw CandidatesExhausted("no candidate pairs left to query");

    switch (policy) {
        case Policy::eig: {
            if (!table) throw ContractError("EIG policy needs a predictive table");
            std::size_t best = 0;
            double best_eig = table->eig(candidates.pairs[0].i, candidates.pairs[0].j);
            for (std::size_t k = 1; k < candidates.size(); ++k) {
                const auto& p = candidates.pairs[k];
                const double e = table->eig(p.i, p.j);
                if (e > best_eig || (e == best_eig && p < candidates.pairs[best])) {
                    best = k;
                    best_eig = e;
                }
            }
            return {candidates.pairs[best], candidates.scores[best], best_eig};
        }
        case Policy::uncertainty:
            return {candidates.pairs[0], candidates.scores[0], eig_of(candidates.pairs[0])};
        case Policy::random: {
            const std::size_t k = rng.below(candidates.size());
            return {candidates.pairs[k], candidates.scores[k], eig_of(candidates.pairs[k])};
        }
        case Policy::static_eig: break;
    }
    throw ContractError("unhandled policy");
}

}  // namespace cape
