#include "cape/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "cape/errors.hpp"
#include "cape/particles.hpp"

namespace cape {

Label draw_label(const CategoricalDist3& p, StreamRng& rng) {
    const double u = rng.uniform() * (p.p[0] + p.p[1] + p.p[2]);
    if (u < p.p[0]) return Label::reverse;
    if (u < p.p[0] + p.p[1]) return Label::forward;
    return Label::none;
}

namespace {

Label mirror(Label y) {
    switch (y) {
        case Label::reverse: return Label::forward;
        case Label::forward: return Label::reverse;
        case Label::none: return Label::none;
    }
    return Label::none;
}

void check_query(const Pair& p, std::size_t d) {
    if (p.i == p.j) throw ContractError("oracle query needs i != j");
    if (p.i >= d || p.j >= d) throw ContractError("oracle query out of range");
}

}  // namespace

SimulatedOracle::SimulatedOracle(WeightedDag truth, ExpertParams theta, bool sticky)
    : truth_(std::move(truth)), theta_(theta), sticky_(sticky) {
    theta_.validate();
}

CategoricalDist3 SimulatedOracle::distribution(std::size_t i, std::size_t j) const {
    if (theta_.needs_features()) {
        const ParticleSet ctx(std::vector<WeightedDag>{truth_});
        return likelihood(truth_, i, j, theta_, &ctx);
    }
    return likelihood(truth_, i, j, theta_);
}

Label SimulatedOracle::answer(const Query& q, StreamRng& rng) {
    check_query(q.pair, truth_.d());
    const auto [i, j] = q.pair;
    if (sticky_) {
        const Pair key{std::min(i, j), std::max(i, j)};
        if (auto it = memory_.find(key); it != memory_.end()) return i < j ? it->second : mirror(it->second);
        const Label y = draw_label(distribution(i, j), rng);
        memory_[key] = i < j ? y : mirror(y);
        return y;
    }
    return draw_label(distribution(i, j), rng);
}

Label DeterministicOracle::answer(const Query& q, StreamRng&) {
    check_query(q.pair, truth_.d());
    return true_label(truth_, q.pair.i, q.pair.j);
}

EffectGraphOracle::EffectGraphOracle(Adjacency a) : a_(std::move(a)) {
    for (std::size_t i = 0; i < a_.d(); ++i) {
        if (a_(i, i) != 0) throw ContractError("effect graph must have a zero diagonal");
        for (std::size_t j = 0; j < a_.d(); ++j)
            if (a_(i, j) > 1) throw ContractError("effect graph must be binary");
    }
}

Label EffectGraphOracle::answer(const Query& q, StreamRng&) {
    check_query(q.pair, a_.d());
    return target_label(a_, q.pair.i, q.pair.j);
}

std::vector<Pair> EffectGraphOracle::ambiguous_pairs() const {
    std::vector<Pair> out;
    for (std::size_t i = 0; i < a_.d(); ++i)
        for (std::size_t j = i + 1; j < a_.d(); ++j)
            if (a_(i, j) && a_(j, i)) out.push_back({i, j});
    return out;
}

void HumanChannel::publish(const Query& q) {
    std::lock_guard lock(mu_);
    if (pending_ && pending_->round == q.round && pending_->pair == q.pair) {
        pending_ = q;
        return;
    }
    pending_ = q;
    answer_.reset();
    cancelled_ = false;
}

std::optional<Query> HumanChannel::pending() const {
    std::lock_guard lock(mu_);
    if (answer_) return std::nullopt;
    return pending_;
}

HumanChannel::SubmitResult HumanChannel::submit(std::size_t i, std::size_t j, int label) {
    std::lock_guard lock(mu_);
    if (label < 0 || label > 2) return SubmitResult::bad_label;
    if (!pending_) return SubmitResult::no_pending;
    if (pending_->pair.i != i || pending_->pair.j != j) return SubmitResult::wrong_pair;
    if (answer_) return SubmitResult::already_answered;
    answer_ = label_from_int(label);
    cv_.notify_all();
    return SubmitResult::accepted;
}

Label HumanChannel::wait(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    const bool ready = cv_.wait_for(lock, timeout, [&] { return answer_.has_value() || cancelled_; });
    if (!ready || !answer_) {
        cancelled_ = false;
        throw OracleTimeout(ready ? "human answer wait cancelled" : "human answer timed out");
    }
    const Label y = *answer_;
    answer_.reset();
    pending_.reset();
    return y;
}

void HumanChannel::cancel() {
    std::lock_guard lock(mu_);
    cancelled_ = true;
    cv_.notify_all();
}

void HumanChannel::clear() {
    std::lock_guard lock(mu_);
    pending_.reset();
    answer_.reset();
}

HumanOracle::HumanOracle(std::shared_ptr<HumanChannel> channel, std::chrono::milliseconds timeout)
    : channel_(std::move(channel)), timeout_(timeout) {
    if (!channel_) throw ContractError("human oracle needs a channel");
}

Label HumanOracle::answer(const Query& q, StreamRng&) {
    channel_->publish(q);
    return channel_->wait(timeout_);
}

double kolmogorov_q(double x) {
    constexpr double tol = 1e-10;
    if (x <= 0.0) return 1.0;
    double q;
    if (x < 1.18) {
        const double y = std::exp(-std::numbers::pi * std::numbers::pi / (8.0 * x * x));
        double sum = 0.0;
        for (int k = 1; k < 1000; ++k) {
            const double term = std::pow(y, static_cast<double>((2 * k - 1) * (2 * k - 1)));
            sum += term;
            if (term < tol) break;
        }
        q = 1.0 - std::sqrt(2.0 * std::numbers::pi) / x * sum;
    } else {
        double sum = 0.0;
        for (int k = 1; k < 1000; ++k) {
            const double term = 2.0 * std::exp(-2.0 * k * k * x * x);
            sum += (k % 2 == 1) ? term : -term;
            if (term < tol) break;
        }
        q = sum;
    }
    return std::clamp(q, 0.0, 1.0);
}

KsResult ks_two_sample(std::vector<double> a, std::vector<double> b) {
    if (a.empty() || b.empty()) throw ContractError("KS test needs two nonempty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double n = static_cast<double>(a.size()), m = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double dmax = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] == x) ++ia;
        while (ib < b.size() && b[ib] == x) ++ib;
        dmax = std::max(dmax, std::abs(ia / n - ib / m));
    }
    const double ne = std::sqrt(n * m / (n + m));
    return {dmax, kolmogorov_q((ne + 0.12 + 0.11 / ne) * dmax)};
}

std::vector<bool> benjamini_hochberg(const std::vector<double>& p_values, double alpha) {
    const std::size_t m = p_values.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return p_values[a] < p_values[b]; });
    std::size_t cutoff = 0;
    for (std::size_t r = 0; r < m; ++r)
        if (p_values[order[r]] <= static_cast<double>(r + 1) / static_cast<double>(m) * alpha) cutoff = r + 1;
    std::vector<bool> reject(m, false);
    for (std::size_t r = 0; r < cutoff; ++r) reject[order[r]] = true;
    return reject;
}

EffectGraphReport build_effect_graph(const Eigen::MatrixXd& control, const std::vector<InterventionGroup>& groups,
                                     const EffectGraphOptions& opts) {
    if (control.rows() == 0) throw ConfigError("effect graph needs control samples");
    if (!(opts.alpha > 0.0 && opts.alpha < 1.0)) throw ConfigError("alpha must be in (0, 1)");
    const std::size_t k = static_cast<std::size_t>(control.cols());
    EffectGraphReport rep;
    rep.graph = Adjacency(k, 0);

    std::vector<bool> seen(k, false);
    std::vector<const InterventionGroup*> used;
    for (const auto& g : groups) {
        if (g.target >= k) throw ConfigError("intervention target out of range");
        if (static_cast<std::size_t>(g.samples.cols()) != k)
            throw ConfigError("intervention samples have the wrong column count");
        if (seen[g.target]) throw ConfigError("duplicate intervention group for one target");
        seen[g.target] = true;
        if (static_cast<std::size_t>(g.samples.rows()) < opts.min_group_n) {
            rep.dropped_targets.push_back(g.target);
            continue;
        }
        used.push_back(&g);
        rep.used_targets.push_back(g.target);
    }

    std::vector<std::vector<double>> control_cols(k);
    std::vector<double> control_mean(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto col = control.col(static_cast<Eigen::Index>(j));
        control_cols[j].assign(col.data(), col.data() + col.size());
        control_mean[j] = col.mean();
    }

    struct Test {
        std::size_t i, j;
        double p, shift;
    };
    std::vector<Test> tests;
    for (const auto* g : used)
        for (std::size_t j = 0; j < k; ++j) {
            if (j == g->target) continue;
            const auto col = g->samples.col(static_cast<Eigen::Index>(j));
            std::vector<double> xs(col.data(), col.data() + col.size());
            const auto ks = ks_two_sample(xs, control_cols[j]);
            tests.push_back({g->target, j, ks.p_value, col.mean() - control_mean[j]});
        }
    std::vector<double> ps;
    ps.reserve(tests.size());
    for (const auto& t : tests) ps.push_back(t.p);
    const auto reject = benjamini_hochberg(ps, opts.alpha);
    rep.tests = tests.size();
    for (std::size_t t = 0; t < tests.size(); ++t) {
        if (!reject[t]) continue;
        ++rep.bh_significant;
        if (std::abs(tests[t].shift) >= opts.min_effect) {
            rep.graph(tests[t].i, tests[t].j) = 1;
            ++rep.edges;
        }
    }
    rep.density = k > 1 ? static_cast<double>(rep.edges) / static_cast<double>(k * (k - 1)) : 0.0;
    return rep;
}

}  // namespace cape
