#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cape/graph.hpp"

namespace cape {

/// S weighted DAGs approximating the current posterior q_t(W).
class ParticleSet {
public:
    ParticleSet() = default;
    /// Uniform weights 1/S.
    explicit ParticleSet(std::vector<WeightedDag> particles);
    ParticleSet(std::vector<WeightedDag> particles, std::vector<double> weights,
                std::vector<double> log_prior = {});

    std::size_t size() const { return particles_.size(); }
    std::size_t d() const { return particles_.empty() ? 0 : particles_.front().d(); }
    const std::vector<WeightedDag>& particles() const { return particles_; }
    const WeightedDag& particle(std::size_t s) const { return particles_[s]; }
    std::span<const double> weights() const { return weights_; }
    double weight(std::size_t s) const { return weights_[s]; }
    /// Per-particle surrogate log q0; empty when absent.
    std::span<const double> log_prior() const { return log_prior_; }
    bool has_log_prior() const { return !log_prior_.empty(); }
    const std::vector<std::string>& names() const;

    /// Replaces the weights; they must be nonnegative and sum to 1 within 1e-10.
    void set_weights(std::vector<double> weights);
    void set_log_prior(std::vector<double> log_prior);

    std::vector<WeightedDag>& mutable_particles() { return particles_; }
    std::vector<double>& mutable_log_prior() { return log_prior_; }

    /// Throws ContractError when an invariant is broken.
    void validate() const;

private:
    std::vector<WeightedDag> particles_;
    std::vector<double> weights_;
    std::vector<double> log_prior_;
};

/// One revealed expert answer.
struct QueryRecord {
    int round = 0;
    std::size_t i = 0;
    std::size_t j = 0;
    Label label = Label::none;
    std::string policy;
    std::optional<double> eig;
    /// Structural feature phi_{i->j} frozen at query time (lambda > 0 only).
    std::optional<double> frozen_feature;
};

/// The revealed entries D_{1:t}, rounds 1, 2, ..., t.
class History {
public:
    void append(QueryRecord r);
    const std::vector<QueryRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }
    bool empty() const { return records_.empty(); }
    bool was_queried(Pair p) const;

private:
    std::vector<QueryRecord> records_;
};

}  // namespace cape
