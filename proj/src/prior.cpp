#include "cape/prior.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "cape/errors.hpp"

namespace cape {

WeightedDag erdos_renyi_dag(std::size_t d, double edge_prob, double weight_low, double weight_high, StreamRng& rng,
                            std::vector<std::string> names) {
    if (!(edge_prob >= 0.0 && edge_prob <= 1.0)) throw ConfigError("edge_prob must be in [0, 1]");
    if (!(weight_low < weight_high)) throw ConfigError("weight_low must be < weight_high");
    std::vector<std::size_t> order(d);
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(std::span<std::size_t>(order));
    std::vector<double> w(d * d, 0.0);
    for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = a + 1; b < d; ++b)
            if (rng.bernoulli(edge_prob)) w[order[a] * d + order[b]] = rng.uniform(weight_low, weight_high);
    return WeightedDag::from_matrix(d, std::move(w), std::move(names));
}

WeightedDag perturb_graph(const WeightedDag& w_star, const PerturbOptions& opts, StreamRng& rng) {
    for (double p : {opts.flip_prob, opts.addremove_prob})
        if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("perturbation probabilities must be in [0, 1]");
    if (!(opts.weight_noise_sd >= 0.0)) throw ConfigError("weight_noise_sd must be >= 0");

    WeightedDag w = w_star;
    for (const auto& e : w_star.edges())
        if (rng.bernoulli(opts.flip_prob)) w.try_apply({GraphEdit::Kind::flip, e.i, e.j});

    const std::size_t d = w.d();
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = i + 1; j < d; ++j) {
            if (!rng.bernoulli(opts.addremove_prob)) continue;
            if (w.has_edge(i, j)) {
                w.try_apply({GraphEdit::Kind::remove, i, j});
            } else if (w.has_edge(j, i)) {
                w.try_apply({GraphEdit::Kind::remove, j, i});
            } else {
                const bool forward = rng.bernoulli(0.5);
                const double weight = rng.uniform(opts.add_weight_low, opts.add_weight_high);
                w.try_apply({GraphEdit::Kind::add, forward ? i : j, forward ? j : i, weight});
            }
        }

    if (opts.weight_noise_sd > 0.0)
        for (const auto& e : w.edges()) {
            double v;
            do {
                v = w.weight(e.i, e.j) + rng.normal(0.0, opts.weight_noise_sd);
            } while (v == 0.0);
            w.try_apply({GraphEdit::Kind::perturb, e.i, e.j, v});
        }
    return w;
}

ParticleSet perturbed_prior(const WeightedDag& w_star, const PerturbOptions& opts, std::size_t s,
                            const RngFactory& rngs) {
    if (s < 1) throw ConfigError("particle count must be >= 1");
    std::vector<WeightedDag> parts;
    parts.reserve(s);
    for (std::size_t k = 0; k < s; ++k) {
        StreamRng rng = rngs.stream(Stream::prior, static_cast<std::uint32_t>(k));
        parts.push_back(perturb_graph(w_star, opts, rng));
    }
    return ParticleSet(std::move(parts));
}

BootstrapOptions BootstrapOptions::sachs() {
    BootstrapOptions o;
    o.particles = 500;
    o.max_parents = 3;
    o.corr_k = 6;
    o.ridge = 1e-3;
    return o;
}

BootstrapOptions BootstrapOptions::causalbench() {
    BootstrapOptions o;
    o.particles = 1000;
    o.max_parents = 3;
    o.corr_k = 8;
    o.ridge = 1e-2;
    return o;
}

double correlation(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const Eigen::VectorXd ca = a.array() - a.mean();
    const Eigen::VectorXd cb = b.array() - b.mean();
    const double va = ca.squaredNorm(), vb = cb.squaredNorm();
    if (va <= 0.0 || vb <= 0.0) return 0.0;
    return ca.dot(cb) / std::sqrt(va * vb);
}

namespace {

void check_bootstrap(const Eigen::MatrixXd& x, const BootstrapOptions& opts) {
    if (x.rows() < 2) throw ConfigError("bootstrap prior needs N >= 2 rows");
    if (opts.max_parents < 1) throw ConfigError("max_parents must be >= 1");
    if (opts.corr_k < opts.max_parents) throw ConfigError("corr_k must be >= max_parents");
    if (!(opts.ridge > 0.0)) throw ConfigError("ridge must be > 0");
    if (!(opts.coef_threshold >= 0.0)) throw ConfigError("coef_threshold must be >= 0");
    if (opts.fixed_order) {
        auto sorted = *opts.fixed_order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t k = 0; k < sorted.size(); ++k)
            if (sorted[k] != k || sorted.size() != static_cast<std::size_t>(x.cols()))
                throw ConfigError("fixed_order must be a permutation of the columns");
    }
}

}  // namespace

WeightedDag bootstrap_dag(const Eigen::MatrixXd& x, const BootstrapOptions& opts, StreamRng& rng,
                          const std::vector<std::string>& names) {
    check_bootstrap(x, opts);
    const Eigen::Index n = x.rows();
    const std::size_t d = static_cast<std::size_t>(x.cols());

    Eigen::MatrixXd xb(n, x.cols());
    for (Eigen::Index r = 0; r < n; ++r) xb.row(r) = x.row(static_cast<Eigen::Index>(rng.below(n)));

    Eigen::VectorXd sd(x.cols());
    for (Eigen::Index c = 0; c < x.cols(); ++c) {
        const double mean = xb.col(c).mean();
        xb.col(c).array() -= mean;
        const double s = std::sqrt(xb.col(c).squaredNorm() / static_cast<double>(n));
        sd(c) = s;
        if (s > 0.0) xb.col(c) /= s;
    }

    std::vector<std::size_t> order(d);
    if (opts.fixed_order) {
        order = *opts.fixed_order;
    } else {
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(std::span<std::size_t>(order));
    }

    std::vector<double> w(d * d, 0.0);
    for (std::size_t pos = 1; pos < d; ++pos) {
        const std::size_t child = order[pos];
        const Eigen::VectorXd y = xb.col(static_cast<Eigen::Index>(child));
        std::vector<std::pair<double, std::size_t>> ranked;
        for (std::size_t q = 0; q < pos; ++q) {
            const std::size_t c = order[q];
            ranked.push_back({std::abs(correlation(xb.col(static_cast<Eigen::Index>(c)), y)), c});
        }
        auto by_corr = [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return a.second < b.second;
        };
        std::sort(ranked.begin(), ranked.end(), by_corr);
        if (ranked.size() > opts.corr_k) ranked.resize(opts.corr_k);
        if (ranked.size() > opts.max_parents) ranked.resize(opts.max_parents);

        const Eigen::Index k = static_cast<Eigen::Index>(ranked.size());
        Eigen::MatrixXd p(n, k);
        for (Eigen::Index c = 0; c < k; ++c) p.col(c) = xb.col(static_cast<Eigen::Index>(ranked[c].second));
        const Eigen::MatrixXd gram = p.transpose() * p + opts.ridge * Eigen::MatrixXd::Identity(k, k);
        const Eigen::VectorXd beta = gram.ldlt().solve(p.transpose() * y);
        for (Eigen::Index c = 0; c < k; ++c) {
            if (!(std::abs(beta(c)) > opts.coef_threshold)) continue;
            const std::size_t parent = ranked[c].second;
            double v = beta(c);
            if (opts.raw_scale_weights && sd(static_cast<Eigen::Index>(parent)) > 0.0)
                v *= sd(static_cast<Eigen::Index>(child)) / sd(static_cast<Eigen::Index>(parent));
            if (v != 0.0) w[parent * d + child] = v;
        }
    }
    return WeightedDag::from_matrix(d, std::move(w), names);
}

ParticleSet bootstrap_linear_prior(const Eigen::MatrixXd& x, const BootstrapOptions& opts, const RngFactory& rngs,
                                   const std::vector<std::string>& names) {
    check_bootstrap(x, opts);
    if (opts.particles < 1) throw ConfigError("particle count must be >= 1");
    std::vector<WeightedDag> parts(opts.particles);
    auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
            StreamRng rng = rngs.stream(Stream::prior, static_cast<std::uint32_t>(s));
            parts[s] = bootstrap_dag(x, opts, rng, names);
        }
    };
    const std::size_t n = opts.particles;
    const std::size_t workers = std::clamp<std::size_t>(opts.threads, 1, n);
    if (workers == 1) {
        work(0, n);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (n + workers - 1) / workers;
        for (std::size_t t = 0; t < workers; ++t) {
            const std::size_t b = std::min(n, t * chunk), e = std::min(n, b + chunk);
            pool.emplace_back(work, b, e);
        }
        for (auto& th : pool) th.join();
    }
    return ParticleSet(std::move(parts));
}

}  // namespace cape
