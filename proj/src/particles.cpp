#include "cape/particles.hpp"

#include <cmath>
#include <numeric>

#include "cape/errors.hpp"

namespace cape {

ParticleSet::ParticleSet(std::vector<WeightedDag> particles)
    : particles_(std::move(particles)),
      weights_(particles_.size(), particles_.empty() ? 0.0 : 1.0 / static_cast<double>(particles_.size())) {
    validate();
}

ParticleSet::ParticleSet(std::vector<WeightedDag> particles, std::vector<double> weights,
                         std::vector<double> log_prior)
    : particles_(std::move(particles)), weights_(std::move(weights)), log_prior_(std::move(log_prior)) {
    validate();
}

const std::vector<std::string>& ParticleSet::names() const {
    static const std::vector<std::string> empty;
    return particles_.empty() ? empty : particles_.front().names();
}

void ParticleSet::set_weights(std::vector<double> weights) {
    std::swap(weights_, weights);
    try {
        validate();
    } catch (...) {
        std::swap(weights_, weights);
        throw;
    }
}

void ParticleSet::set_log_prior(std::vector<double> log_prior) {
    if (!log_prior.empty() && log_prior.size() != particles_.size())
        throw ContractError("log_prior length does not match particle count");
    log_prior_ = std::move(log_prior);
}

void ParticleSet::validate() const {
    if (particles_.empty()) throw ContractError("particle set must hold at least one particle");
    if (weights_.size() != particles_.size()) throw ContractError("weight count does not match particle count");
    if (!log_prior_.empty() && log_prior_.size() != particles_.size())
        throw ContractError("log_prior length does not match particle count");
    const std::size_t d = particles_.front().d();
    double total = 0.0;
    for (std::size_t s = 0; s < particles_.size(); ++s) {
        if (particles_[s].d() != d) throw ContractError("particles disagree on node count");
        if (!(weights_[s] >= 0.0) || !std::isfinite(weights_[s]))
            throw ContractError("particle weights must be finite and nonnegative");
        total += weights_[s];
    }
    if (std::abs(total - 1.0) > 1e-10) throw ContractError("particle weights must sum to 1");
}

void History::append(QueryRecord r) {
    const int expected = records_.empty() ? 1 : records_.back().round + 1;
    if (r.round != expected)
        throw ContractError("history rounds must increase by one from 1; expected " +
                            std::to_string(expected) + ", got " + std::to_string(r.round));
    if (r.i == r.j) throw ContractError("query pair must have i != j");
    records_.push_back(std::move(r));
}

bool History::was_queried(Pair p) const {
    for (const auto& r : records_)
        if (r.i == p.i && r.j == p.j) return true;
    return false;
}

}  // namespace cape
