#pragma once

#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cape/expert.hpp"
#include "cape/graph.hpp"
#include "cape/rng.hpp"

namespace cape {

/// A query handed to an oracle. The predictive and EIG are informational
/// (shown to human experts); simulated oracles ignore them.
struct Query {
    int round = 0;
    Pair pair;
    CategoricalDist3 predictive;
    std::optional<double> eig;
};

class Oracle {
public:
    virtual ~Oracle() = default;
    virtual Label answer(const Query& q, StreamRng& rng) = 0;
    virtual std::string kind() const = 0;
};

/// Draws each answer from the expert likelihood evaluated at the ground
/// truth. Repeated queries are i.i.d. unless `sticky`, in which case the
/// first answer for an unordered pair is repeated (mirrored for (j, i)).
class SimulatedOracle final : public Oracle {
public:
    SimulatedOracle(WeightedDag truth, ExpertParams theta, bool sticky = false);
    Label answer(const Query& q, StreamRng& rng) override;
    std::string kind() const override { return "simulated"; }
    CategoricalDist3 distribution(std::size_t i, std::size_t j) const;

private:
    WeightedDag truth_;
    ExpertParams theta_;
    bool sticky_;
    std::map<Pair, Label> memory_;
};

/// Inverse-CDF draw from a three-class distribution with one uniform.
Label draw_label(const CategoricalDist3& p, StreamRng& rng);

/// Always answers the true label of the ground-truth DAG.
class DeterministicOracle final : public Oracle {
public:
    explicit DeterministicOracle(WeightedDag truth) : truth_(std::move(truth)) {}
    Label answer(const Query& q, StreamRng& rng) override;
    std::string kind() const override { return "deterministic"; }

private:
    WeightedDag truth_;
};

/// Answers from a binary (possibly cyclic) effect graph; bidirectional pairs
/// are ambiguous and answer "no direct edge".
class EffectGraphOracle final : public Oracle {
public:
    explicit EffectGraphOracle(Adjacency a);
    Label answer(const Query& q, StreamRng& rng) override;
    std::string kind() const override { return "effect_graph"; }
    const Adjacency& graph() const { return a_; }
    std::vector<Pair> ambiguous_pairs() const;

private:
    Adjacency a_;
};

/// Mailbox between the session loop and an external answer source (the
/// HTTP service). At most one query is pending at a time.
class HumanChannel {
public:
    enum class SubmitResult { accepted, no_pending, wrong_pair, already_answered, bad_label };

    /// Makes q the pending query. Re-publishing the same round and pair keeps
    /// an answer that arrived after a timeout.
    void publish(const Query& q);
    std::optional<Query> pending() const;
    SubmitResult submit(std::size_t i, std::size_t j, int label);
    /// Blocks until the pending query is answered, then clears it. Throws
    /// OracleTimeout on timeout or cancellation.
    Label wait(std::chrono::milliseconds timeout);
    void cancel();
    void clear();

private:
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::optional<Query> pending_;
    std::optional<Label> answer_;
    bool cancelled_ = false;
};

class HumanOracle final : public Oracle {
public:
    HumanOracle(std::shared_ptr<HumanChannel> channel, std::chrono::milliseconds timeout);
    Label answer(const Query& q, StreamRng& rng) override;
    std::string kind() const override { return "human"; }
    const std::shared_ptr<HumanChannel>& channel() const { return channel_; }

private:
    std::shared_ptr<HumanChannel> channel_;
    std::chrono::milliseconds timeout_;
};

struct KsResult {
    double statistic = 0.0;
    double p_value = 1.0;
};

/// Kolmogorov survival function Q(x) = 2 sum_{k>=1} (-1)^{k-1} exp(-2 k^2 x^2).
/// Below x = 1.18 the equivalent theta-function series is summed instead;
/// both stop once a term drops below 1e-10.
double kolmogorov_q(double x);

/// Two-sample KS test with the asymptotic p-value, using the effective size
/// n m / (n + m) and Stephens' small-sample correction of the argument.
KsResult ks_two_sample(std::vector<double> a, std::vector<double> b);

/// Benjamini-Hochberg step-up: true where the hypothesis is rejected at
/// FDR level alpha.
std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double alpha);

struct InterventionGroup {
    std::size_t target = 0;
    Eigen::MatrixXd samples;  // rows = cells, columns = measured genes
};

struct EffectGraphOptions {
    double alpha = 0.05;
    double min_effect = 0.3;
    std::size_t min_group_n = 25;
};

struct EffectGraphReport {
    Adjacency graph;
    std::vector<std::size_t> used_targets;
    std::vector<std::size_t> dropped_targets;
    std::size_t tests = 0;
    std::size_t bh_significant = 0;
    std::size_t edges = 0;
    double density = 0.0;
};

/// A_ij = 1 iff perturbing i moves X_j: KS p-values over every
/// (target, measured gene) pair are BH-adjusted jointly and the absolute mean
/// shift against controls must reach min_effect. Groups smaller than
/// min_group_n are dropped. Deterministic.
EffectGraphReport build_effect_graph(const Eigen::MatrixXd& control, const std::vector<InterventionGroup>& groups,
                                     const EffectGraphOptions& opts = {});

}  // namespace cape
