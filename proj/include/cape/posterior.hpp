#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "cape/expert.hpp"
#include "cape/graph.hpp"
#include "cape/particles.hpp"
#include "cape/rng.hpp"

namespace cape {

/// 1 / sum(w^2).
double ess(std::span<const double> weights);

/// Multiplies each weight by exp(loglik[s]) and renormalizes, in log space.
/// Throws DegeneratePosterior when every product is zero.
void reweight_log_in_place(ParticleSet& pset, std::span<const double> loglik);

/// Same, from plain likelihood values (zeros allowed).
ParticleSet reweight_with_likelihoods(const ParticleSet& pset, std::span<const double> lik);

/// Log-likelihood of label y for every particle. `phi_ij` is the frozen
/// feature value; when absent and features are enabled it is computed from
/// `pset` itself.
std::vector<double> label_log_likelihoods(const ParticleSet& pset, std::size_t i, std::size_t j, Label y,
                                          const ExpertParams& params, std::optional<double> phi_ij = {});

/// Bayes update for one answer: w_s <- w_s * p(y | W_s), renormalized.
void reweight_in_place(ParticleSet& pset, std::size_t i, std::size_t j, Label y, const ExpertParams& params,
                       std::optional<double> phi_ij = {});
ParticleSet reweight(const ParticleSet& pset, std::size_t i, std::size_t j, Label y, const ExpertParams& params,
                     std::optional<double> phi_ij = {});

/// Multinomial resampling; returned weights are exactly 1/S and log-prior
/// entries travel with their particles.
ParticleSet resample(const ParticleSet& pset, StreamRng& rng);

/// Multinomial draw of S indices proportional to `weights`.
std::vector<std::size_t> multinomial_indices(std::span<const double> weights, std::size_t s, StreamRng& rng);

/// Log density of the (surrogate) initial distribution used inside the
/// rejuvenation acceptance ratio.
class LogPrior {
public:
    virtual ~LogPrior() = default;
    virtual double log_density(const WeightedDag& w) const = 0;
    /// log q(W') - log q(W) for W' = edit(W). Implementations may compute
    /// this locally; the default evaluates both densities.
    virtual double log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit& e) const;
};

/// Uniform over structures. With a weight range, each present edge also
/// carries the Uniform[lo, hi] density (zero outside); without one the
/// weight term is flat.
class UniformPrior final : public LogPrior {
public:
    UniformPrior() = default;
    UniformPrior(double weight_low, double weight_high);

    double log_density(const WeightedDag& w) const override;
    double log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit& e) const override;

private:
    double edge_log_density(double weight) const;

    std::optional<std::pair<double, double>> range_;
};

/// Product-Bernoulli structure term over smoothed initial edge marginals
/// m = (c + a) / (1 + 2a), plus a Normal(mu, sd) density for every present
/// edge weight, with mu and sd fitted once to all nonzero initial weights.
class SurrogatePrior final : public LogPrior {
public:
    static constexpr double default_smoothing = 0.01;
    static constexpr double default_min_sd = 1e-2;

    SurrogatePrior(Square<double> smoothed_marginals, double mu, double sd);

    static SurrogatePrior fit(const ParticleSet& initial, double smoothing = default_smoothing,
                              double min_sd = default_min_sd);

    double log_density(const WeightedDag& w) const override;
    double log_ratio(const WeightedDag& w, const WeightedDag& edited, const GraphEdit& e) const override;

    double marginal(std::size_t i, std::size_t j) const { return m_(i, j); }
    double mu() const { return mu_; }
    double sd() const { return sd_; }

private:
    double entry(const WeightedDag& w, std::size_t i, std::size_t j) const;

    Square<double> m_;
    double mu_;
    double sd_;
};

struct RejuvenationOptions {
    int mh_steps = 2;
    double add_weight_low = 0.5;
    double add_weight_high = 1.5;
    double perturb_sd = 0.2;
    /// Include the proposal ratio q(W|W') / q(W'|W) in the acceptance. When
    /// false the kernel is treated as symmetric.
    bool hastings_correction = true;
    unsigned threads = 1;
};

struct RejuvenationStats {
    std::size_t proposed = 0;
    std::size_t accepted = 0;
    std::size_t rejected_cycle = 0;
    double accept_rate() const { return proposed == 0 ? 0.0 : static_cast<double>(accepted) / proposed; }
};

/// Answers grouped by unordered pair, so an edit of {i, j} only replays the
/// records that can change.
class HistoryIndex {
public:
    struct Entry {
        std::size_t i;
        std::size_t j;
        Label label;
        double phi;
    };

    HistoryIndex(const History& history, std::size_t d);
    std::span<const Entry> on_pair(std::size_t i, std::size_t j) const;

private:
    std::size_t d_;
    std::vector<std::vector<Entry>> by_pair_;
};

/// log q(W) + sum over the history of log p(y | W).
double log_target(const WeightedDag& w, const History& history, const ExpertParams& params, const LogPrior& prior);

/// One MH step on a single graph. Draws a move kind uniformly from the kinds
/// that have an eligible pair, then a pair uniformly from that kind's
/// eligible set. Returns true on acceptance.
bool mh_step(WeightedDag& w, const HistoryIndex& index, const ExpertParams& params, const LogPrior& prior,
             const RejuvenationOptions& opts, StreamRng& rng, RejuvenationStats& stats, double* log_prior_delta);

/// Applies opts.mh_steps MH steps to every particle. Particle s uses the
/// substream (rejuvenate, round, s), so results do not depend on threads.
RejuvenationStats rejuvenate(ParticleSet& pset, const History& history, const ExpertParams& params,
                             const LogPrior& prior, const RejuvenationOptions& opts, const RngFactory& rngs,
                             std::uint32_t round);

/// p_ij = sum_s w_s 1[W_ij != 0]; zero diagonal.
Square<double> edge_marginals(const ParticleSet& pset);

}  // namespace cape
