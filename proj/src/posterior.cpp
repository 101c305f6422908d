#include "cape/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <thread>

#include "cape/errors.hpp"

namespace cape {

namespace {

constexpr double neg_inf = -std::numeric_limits<double>::infinity();

double normal_log_pdf(double x, double mu, double sd) {
    const double z = (x - mu) / sd;
    return -0.5 * std::log(2.0 * std::numbers::pi) - std::log(sd) - 0.5 * z * z;
}

std::size_t addable_pairs(const WeightedDag& w) {
    const std::size_t d = w.d();
    return d * (d - 1) - 2 * w.edge_count();
}

std::size_t eligible_kinds(std::size_t edges, std::size_t addable) {
    return (addable > 0 ? 1 : 0) + (edges > 0 ? 3 : 0);
}

}  // namespace

double ess(std::span<const double> weights) {
    double sq = 0.0;
    for (double w : weights) sq += w * w;
    return 1.0 / sq;
}

void reweight_log_in_place(ParticleSet& pset, std::span<const double> loglik) {
    if (loglik.size() != pset.size()) throw ContractError("likelihood count does not match particle count");
    std::vector<double> lw(pset.size());
    double top = neg_inf;
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const double w = pset.weight(s);
        lw[s] = (w > 0.0 ? std::log(w) : neg_inf) + loglik[s];
        if (std::isnan(lw[s])) throw ContractError("NaN log-likelihood in reweight");
        top = std::max(top, lw[s]);
    }
    if (top == neg_inf) throw DegeneratePosterior("every particle weight is zero after reweighting");
    double total = 0.0;
    for (double& v : lw) {
        v = std::exp(v - top);
        total += v;
    }
    for (double& v : lw) v /= total;
    pset.set_weights(std::move(lw));
}

ParticleSet reweight_with_likelihoods(const ParticleSet& pset, std::span<const double> lik) {
    std::vector<double> ll(lik.size());
    for (std::size_t s = 0; s < lik.size(); ++s) {
        if (!(lik[s] >= 0.0)) throw ContractError("likelihoods must be nonnegative");
        ll[s] = lik[s] > 0.0 ? std::log(lik[s]) : neg_inf;
    }
    ParticleSet out = pset;
    reweight_log_in_place(out, ll);
    return out;
}

std::vector<double> label_log_likelihoods(const ParticleSet& pset, std::size_t i, std::size_t j, Label y,
                                          const ExpertParams& params, std::optional<double> phi_ij) {
    if (i == j || i >= pset.d() || j >= pset.d()) throw ContractError("invalid query pair");
    double phi = 0.0;
    if (params.needs_features()) phi = phi_ij ? *phi_ij : feature_value(pset, i, j, params);
    std::vector<double> ll(pset.size());
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const auto& w = pset.particle(s);
        ll[s] = log_likelihood_from_weights(w.weight(i, j), w.weight(j, i), phi, params, y);
    }
    return ll;
}

void reweight_in_place(ParticleSet& pset, std::size_t i, std::size_t j, Label y, const ExpertParams& params,
                       std::optional<double> phi_ij) {
    const auto ll = label_log_likelihoods(pset, i, j, y, params, phi_ij);
    reweight_log_in_place(pset, ll);
}

ParticleSet reweight(const ParticleSet& pset, std::size_t i, std::size_t j, Label y, const ExpertParams& params,
                     std::optional<double> phi_ij) {
    ParticleSet out = pset;
    reweight_in_place(out, i, j, y, params, phi_ij);
    return out;
}

std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t s, StreamRng& rng) {
    std::vector<double> cum(weights.size());
    double run = 0.0;
    for (std::size_t k = 0; k < weights.size(); ++k) {
        run += weights[k];
        cum[k] = run;
    }
    std::vector<std::size_t> idx(s);
    for (auto& out : idx) {
        const double u = rng.uniform() * run;
        auto it = std::upper_bound(cum.begin(), cum.end(), u);
        std::size_t k = static_cast<std::size_t>(it - cum.begin());
        if (k >= weights.size()) k = weights.size() - 1;
        // upper_bound can land on a zero-weight slot only through rounding
        while (weights[k] == 0.0 && k > 0) --k;
        out = k;
    }
    return idx;
}

ParticleSet resample(const ParticleSet& pset, StreamRng& rng) {
    const std::size_t s = pset.size();
    const auto idx = multinomial_indices(pset.weights(), s, rng);
    std::vector<WeightedDag> parts;
    parts.reserve(s);
    std::vector<double> lp;
    if (pset.has_log_prior()) lp.reserve(s);
    for (std::size_t k : idx) {
        parts.push_back(pset.particle(k));
        if (pset.has_log_prior()) lp.push_back(pset.log_prior()[k]);
    }
    std::vector<double> w(s, 1.0 / static_cast<double>(s));
    return ParticleSet(std::move(parts), std::move(w), std::move(lp));
}

double LogPrior::log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit&) const {
    return log_density(edited) - log_density(w);
}

UniformPrior::UniformPrior(double weight_low, double weight_high) : range_(std::make_pair(weight_low, weight_high)) {
    if (!(weight_low < weight_high)) throw ConfigError("uniform prior needs weight_low < weight_high");
}

double UniformPrior::edge_log_density(double weight) const {
    if (!range_) return 0.0;
    if (weight < range_->first || weight > range_->second) return neg_inf;
    return -std::log(range_->second - range_->first);
}

double UniformPrior::log_density(const WeightedDag& w) const {
    double total = 0.0;
    for (const auto& e : w.edges()) total += edge_log_density(w.weight(e.i, e.j));
    return total;
}

double UniformPrior::log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit& e) const {
    double delta = 0.0;
    for (auto [a, b] : {std::pair{e.i, e.j}, std::pair{e.j, e.i}}) {
        if (edited.has_edge(a, b)) delta += edge_log_density(edited.weight(a, b));
        if (w.has_edge(a, b)) delta -= edge_log_density(w.weight(a, b));
    }
    return delta;
}

SurrogatePrior::SurrogatePrior(Square<double> smoothed_marginals, double mu, double sd)
    : m_(std::move(smoothed_marginals)), mu_(mu), sd_(sd) {
    if (!(sd_ > 0.0)) throw ContractError("surrogate prior needs sd > 0");
    for (std::size_t i = 0; i < m_.d(); ++i)
        for (std::size_t j = 0; j < m_.d(); ++j)
            if (i != j && !(m_(i, j) > 0.0 && m_(i, j) < 1.0))
                throw ContractError("surrogate marginals must lie strictly inside (0, 1)");
}

SurrogatePrior SurrogatePrior::fit(const ParticleSet& initial, double smoothing, double min_sd) {
    if (!(smoothing > 0.0)) throw ConfigError("surrogate smoothing must be > 0");
    const std::size_t d = initial.d();
    Square<double> counts = edge_marginals(initial);
    Square<double> m(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) m(i, j) = (counts(i, j) + smoothing) / (1.0 + 2.0 * smoothing);

    double mass = 0.0, mean = 0.0;
    for (std::size_t s = 0; s < initial.size(); ++s)
        for (double v : initial.particle(s).weights())
            if (v != 0.0) {
                mass += initial.weight(s);
                mean += initial.weight(s) * v;
            }
    double mu = 0.0, sd = 1.0;
    if (mass > 0.0) {
        mu = mean / mass;
        double var = 0.0;
        for (std::size_t s = 0; s < initial.size(); ++s)
            for (double v : initial.particle(s).weights())
                if (v != 0.0) var += initial.weight(s) * (v - mu) * (v - mu);
        sd = std::sqrt(var / mass);
    }
    return SurrogatePrior(std::move(m), mu, std::max(sd, min_sd));
}

double SurrogatePrior::entry(const WeightedDag& w, std::size_t i, std::size_t j) const {
    if (w.has_edge(i, j)) return std::log(m_(i, j)) + normal_log_pdf(w.weight(i, j), mu_, sd_);
    return std::log1p(-m_(i, j));
}

double SurrogatePrior::log_density(const WeightedDag& w) const {
    if (w.d() != m_.d()) throw ContractError("surrogate prior dimension mismatch");
    double total = 0.0;
    for (std::size_t i = 0; i < w.d(); ++i)
        for (std::size_t j = 0; j < w.d(); ++j)
            if (i != j) total += entry(w, i, j);
    return total;
}

double SurrogatePrior::log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit& e) const {
    return entry(edited, e.i, e.j) - entry(w, e.i, e.j) + entry(edited, e.j, e.i) - entry(w, e.j, e.i);
}

HistoryIndex::HistoryIndex(const History& history, std::size_t d) : d_(d), by_pair_(d * d) {
    for (const auto& r : history.records()) {
        if (r.i >= d || r.j >= d || r.i == r.j) throw ContractError("history record out of range");
        const std::size_t lo = std::min(r.i, r.j), hi = std::max(r.i, r.j);
        by_pair_[lo * d + hi].push_back({r.i, r.j, r.label, r.frozen_feature.value_or(0.0)});
    }
}

std::span<const HistoryIndex::Entry> HistoryIndex::on_pair(std::size_t i, std::size_t j) const {
    const std::size_t lo = std::min(i, j), hi = std::max(i, j);
    return by_pair_[lo * d_ + hi];
}

double log_target(const WeightedDag& w, const History& history, const ExpertParams& params, const LogPrior& prior) {
    double total = prior.log_density(w);
    for (const auto& r : history.records())
        total += log_likelihood_from_weights(w.weight(r.i, r.j), w.weight(r.j, r.i), r.frozen_feature.value_or(0.0),
                                             params, r.label);
    return total;
}

bool mh_step(WeightedDag& w, const HistoryIndex& index, const ExpertParams& params, const LogPrior& prior,
             const RejuvenationOptions& opts, StreamRng& rng, RejuvenationStats& stats, double* log_prior_delta) {
    const std::size_t d = w.d();
    const std::size_t edges = w.edge_count();
    const std::size_t addable = addable_pairs(w);
    const std::size_t kinds = eligible_kinds(edges, addable);
    if (kinds == 0) return false;

    std::vector<GraphEdit::Kind> menu;
    if (addable > 0) menu.push_back(GraphEdit::Kind::add);
    if (edges > 0) {
        menu.push_back(GraphEdit::Kind::remove);
        menu.push_back(GraphEdit::Kind::flip);
        menu.push_back(GraphEdit::Kind::perturb);
    }
    const GraphEdit::Kind kind = menu[rng.below(menu.size())];

    GraphEdit edit{kind, 0, 0, 0.0};
    std::size_t target = kind == GraphEdit::Kind::add ? rng.below(addable) : rng.below(edges);
    bool found = false;
    for (std::size_t i = 0; i < d && !found; ++i)
        for (std::size_t j = 0; j < d && !found; ++j) {
            if (i == j) continue;
            const bool eligible = kind == GraphEdit::Kind::add ? (!w.has_edge(i, j) && !w.has_edge(j, i))
                                                               : w.has_edge(i, j);
            if (!eligible) continue;
            if (target == 0) {
                edit.i = i;
                edit.j = j;
                found = true;
            } else {
                --target;
            }
        }
    if (kind == GraphEdit::Kind::add) {
        edit.weight = rng.uniform(opts.add_weight_low, opts.add_weight_high);
    } else if (kind == GraphEdit::Kind::perturb) {
        do {
            edit.weight = w.weight(edit.i, edit.j) + rng.normal(0.0, opts.perturb_sd);
        } while (edit.weight == 0.0);
    }

    ++stats.proposed;
    auto edited = apply_edit(w, edit);
    if (!edited) {
        ++stats.rejected_cycle;
        return false;
    }

    double log_q = 0.0;
    if (opts.hastings_correction) {
        const double width = opts.add_weight_high - opts.add_weight_low;
        if (kind == GraphEdit::Kind::add) {
            const std::size_t kinds_after = eligible_kinds(edges + 1, addable - 2);
            log_q = std::log(static_cast<double>(kinds)) + std::log(static_cast<double>(addable)) + std::log(width) -
                    std::log(static_cast<double>(kinds_after)) - std::log(static_cast<double>(edges + 1));
        } else if (kind == GraphEdit::Kind::remove) {
            const double removed = w.weight(edit.i, edit.j);
            if (removed < opts.add_weight_low || removed > opts.add_weight_high) return false;
            const std::size_t kinds_after = eligible_kinds(edges - 1, addable + 2);
            log_q = std::log(static_cast<double>(kinds)) + std::log(static_cast<double>(edges)) -
                    std::log(static_cast<double>(kinds_after)) - std::log(static_cast<double>(addable + 2)) -
                    std::log(width);
        }
    }

    const double prior_delta = prior.log_ratio(w, *edited, edit);
    if (prior_delta == neg_inf) return false;
    double lik_delta = 0.0;
    for (const auto& r : index.on_pair(edit.i, edit.j)) {
        lik_delta += log_likelihood_from_weights(edited->weight(r.i, r.j), edited->weight(r.j, r.i), r.phi, params,
                                                 r.label) -
                     log_likelihood_from_weights(w.weight(r.i, r.j), w.weight(r.j, r.i), r.phi, params, r.label);
    }
    const double delta = prior_delta + lik_delta + log_q;
    if (!(delta >= 0.0) && !(std::log(rng.uniform()) < delta)) return false;

    w = std::move(*edited);
    ++stats.accepted;
    if (log_prior_delta) *log_prior_delta += prior_delta;
    return true;
}

RejuvenationStats rejuvenate(ParticleSet& pset, const History& history, const ExpertParams& params,
                             const LogPrior& prior, const RejuvenationOptions& opts, const RngFactory& rngs,
                             std::uint32_t round) {
    if (opts.mh_steps < 0) throw ConfigError("mh_steps must be >= 0");
    if (!(opts.add_weight_low < opts.add_weight_high)) throw ConfigError("add weight range is empty");
    if (params.needs_features())
        for (const auto& r : history.records())
            if (!r.frozen_feature) throw ContractError("feature-dependent history needs frozen feature values");

    const HistoryIndex index(history, pset.d());
    const std::size_t n = pset.size();
    auto& parts = pset.mutable_particles();
    const bool track_prior = pset.has_log_prior();
    auto& lp = pset.mutable_log_prior();

    auto run = [&](std::size_t begin, std::size_t end, RejuvenationStats& st) {
        for (std::size_t s = begin; s < end; ++s) {
            StreamRng rng = rngs.stream(Stream::rejuvenate, round, static_cast<std::uint32_t>(s));
            double delta = 0.0;
            for (int k = 0; k < opts.mh_steps; ++k) mh_step(parts[s], index, params, prior, opts, rng, st, &delta);
            if (track_prior) lp[s] += delta;
        }
    };

    const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, std::max<std::size_t>(n, 1));
    std::vector<RejuvenationStats> per(workers);
    if (workers == 1) {
        run(0, n, per[0]);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t t = 0; t < workers; ++t) {
            const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
            pool.emplace_back(run, b, e, std::ref(per[t]));
        }
        for (auto& th : pool) th.join();
    }
    RejuvenationStats total;
    for (const auto& st : per) {
        total.proposed += st.proposed;
        total.accepted += st.accepted;
        total.rejected_cycle += st.rejected_cycle;
    }
    return total;
}

Square<double> edge_marginals(const ParticleSet& pset) {
    const std::size_t d = pset.d();
    Square<double> p(d, 0.0);
    for (std::size_t s = 0; s < pset.size(); ++s) {
        const double w = pset.weight(s);
        const auto& g = pset.particle(s);
        for (std::size_t i = 0; i < d; ++i)
            for (std::size_t j = 0; j < d; ++j)
                if (g.has_edge(i, j)) p(i, j) += w;
    }
    return p;
}

}  // namespace cape
