#include "doctest.h"

#include <cmath>
#include <numeric>

#include "cape/errors.hpp"
#include "cape/posterior.hpp"
#include "reference.hpp"

using namespace cape;

namespace {

ExpertParams sharp() {
    ExpertParams p;
    p.prob_floor = 0.0;
    return p;
}

WeightedDag edge2(std::size_t i, std::size_t j, double w = 1.0) { return WeightedDag::from_edges(2, {{i, j, w}}); }

WeightedDag random_dag(std::size_t d, std::size_t tries, StreamRng& rng) {
    WeightedDag w(d);
    for (std::size_t k = 0; k < tries; ++k) {
        const std::size_t i = rng.below(d), j = rng.below(d);
        if (i != j && !w.adjacent(i, j)) w.try_apply({GraphEdit::Kind::add, i, j, rng.uniform(0.5, 1.5)});
    }
    return w;
}

}  // namespace

TEST_SUITE("posterior_engine") {
TEST_CASE("reweight examples") {
    const ParticleSet two({edge2(0, 1), edge2(1, 0)});
    const auto out = reweight_with_likelihoods(two, std::vector<double>{0.8, 0.2});
    CHECK(out.weight(0) == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(out.weight(1) == doctest::Approx(0.2).epsilon(1e-15));

    const ParticleSet same({edge2(0, 1), edge2(0, 1), edge2(0, 1)}, {0.2, 0.3, 0.5});
    const auto kept = reweight(same, 0, 1, Label::forward, sharp());
    for (std::size_t s = 0; s < 3; ++s) CHECK(kept.weight(s) == doctest::Approx(same.weight(s)).epsilon(1e-15));

    const auto hard = reweight_with_likelihoods(two, std::vector<double>{0.0, 0.3});
    CHECK(hard.weight(0) == 0.0);
    CHECK(hard.weight(1) == 1.0);

    CHECK_THROWS_AS(reweight_with_likelihoods(two, std::vector<double>{0.0, 0.0}), DegeneratePosterior);
}

TEST_CASE("log-space reweight survives underflowing likelihoods") {
    auto p = sharp();
    p.beta_edge = 1000.0;
    p.beta_dir = 1000.0;
    ParticleSet two({edge2(0, 1), WeightedDag(2)});
    reweight_in_place(two, 0, 1, Label::reverse, p);
    CHECK(std::isfinite(two.weight(0)));
    CHECK(two.weight(0) + two.weight(1) == doctest::Approx(1.0));
}

TEST_CASE("ess examples") {
    CHECK(ess(std::vector<double>(100, 0.01)) == doctest::Approx(100.0));
    CHECK(ess(std::vector<double>{0.0, 1.0, 0.0}) == 1.0);
    CHECK(ess(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(2.6667).epsilon(1e-4));
    CHECK(ess(std::vector<double>{0.5, 0.25, 0.25}) == doctest::Approx(1.0 / 0.375));
}

TEST_CASE("property: ESS lies in [1, S]") {
    StreamRng rng(21, Stream::scratch);
    for (int k = 0; k < 1000; ++k) {
        const std::size_t s = 1 + rng.below(50);
        std::vector<double> w(s);
        for (auto& x : w) x = rng.uniform() * rng.uniform();
        const double total = std::accumulate(w.begin(), w.end(), 0.0);
        if (total == 0.0) continue;
        for (auto& x : w) x /= total;
        const double e = ess(w);
        CHECK(e >= 1.0 - 1e-12);
        CHECK(e <= static_cast<double>(s) + 1e-9);
    }
}

TEST_CASE("resample examples") {
    StreamRng rng(22, Stream::resample);
    const ParticleSet onehot({edge2(0, 1), edge2(1, 0), WeightedDag(2)}, {0.0, 1.0, 0.0}, {-1.0, -2.0, -3.0});
    const auto r = resample(onehot, rng);
    for (std::size_t s = 0; s < 3; ++s) {
        CHECK(r.particle(s) == edge2(1, 0));
        CHECK(r.weight(s) == 1.0 / 3.0);
        CHECK(r.log_prior()[s] == -2.0);
    }
}

TEST_CASE("resample multiplicities are unbiased") {
    const std::size_t s = 10;
    std::vector<WeightedDag> parts;
    for (std::size_t k = 0; k < s; ++k) parts.push_back(WeightedDag::from_edges(2, {{0, 1, 1.0 + k}}));
    const ParticleSet uniform(parts);
    std::vector<double> counts(s, 0.0);
    const int reps = 10000;
    for (int rep = 0; rep < reps; ++rep) {
        StreamRng rng(23, Stream::resample, static_cast<std::uint32_t>(rep));
        const auto r = resample(uniform, rng);
        for (std::size_t k = 0; k < s; ++k) {
            counts[static_cast<std::size_t>(r.particle(k).weight(0, 1) - 1.0)] += 1.0;
            REQUIRE(r.weight(k) == 1.0 / static_cast<double>(s));
        }
    }
    // count_s ~ Binomial(S, 1/S) per draw; the mean over reps has sd sqrt((1 - 1/S) / reps)
    const double sigma = std::sqrt((1.0 - 1.0 / s) / reps);
    CHECK(std::abs(counts[0] / reps - 1.0) <= 3.0 * sigma);
    // all S cells jointly: Pearson chi-square with S - 1 = 9 dof, 0.999 quantile
    double chi2 = 0.0;
    for (double c : counts) chi2 += (c - reps) * (c - reps) / reps;
    CHECK(chi2 <= 27.877);
}

TEST_CASE("resample preserves a functional in expectation") {
    std::vector<WeightedDag> parts;
    std::vector<double> w{0.1, 0.2, 0.3, 0.4};
    for (std::size_t k = 0; k < 4; ++k) parts.push_back(WeightedDag::from_edges(2, {{0, 1, static_cast<double>(k)}}));
    parts[0] = WeightedDag(2);
    const ParticleSet pset(parts, w);
    const double truth = 0.2 * 1 + 0.3 * 2 + 0.4 * 3;
    double sum = 0.0;
    const int reps = 4000;
    for (int rep = 0; rep < reps; ++rep) {
        StreamRng rng(24, Stream::resample, static_cast<std::uint32_t>(rep));
        const auto r = resample(pset, rng);
        for (std::size_t k = 0; k < 4; ++k) sum += r.particle(k).weight(0, 1) / 4.0;
    }
    // per-draw functional variance is Var(f) / S with Var(f) = 1
    CHECK(std::abs(sum / reps - truth) <= 3.0 * std::sqrt(1.0 / 4.0 / reps));
}

TEST_CASE("edge_marginals examples") {
    const ParticleSet all({edge2(0, 1), edge2(0, 1, 2.0)});
    CHECK(edge_marginals(all)(0, 1) == 1.0);
    CHECK(edge_marginals(all)(1, 0) == 0.0);
    CHECK(edge_marginals(all)(0, 0) == 0.0);
    const ParticleSet mixed({edge2(0, 1), WeightedDag(2)}, {0.6, 0.4});
    CHECK(edge_marginals(mixed)(0, 1) == doctest::Approx(0.6));
}

TEST_CASE("surrogate prior examples") {
    const double a = SurrogatePrior::default_smoothing;
    const std::size_t d = 4;
    const ParticleSet empties({WeightedDag(d), WeightedDag(d)});
    const auto prior = SurrogatePrior::fit(empties);
    const double expected = static_cast<double>(d * (d - 1)) * std::log(1.0 - a / (1.0 + 2.0 * a));
    CHECK(prior.log_density(WeightedDag(d)) == doctest::Approx(expected).epsilon(1e-14));
    CHECK(prior.mu() == 0.0);
    CHECK(prior.sd() == 1.0);

    const ParticleSet half({edge2(0, 1, 1.0), WeightedDag(2)});
    const auto hp = SurrogatePrior::fit(half);
    CHECK(hp.marginal(0, 1) == doctest::Approx(0.5));
    const double with = hp.log_density(edge2(0, 1, 1.0));
    const double without = hp.log_density(WeightedDag(2));
    const double weight_term = -0.5 * std::log(2.0 * M_PI) - std::log(hp.sd()) -
                               0.5 * std::pow((1.0 - hp.mu()) / hp.sd(), 2.0);
    CHECK(with - without - weight_term == doctest::Approx(0.0).scale(1.0));

    StreamRng rng(25, Stream::scratch);
    std::vector<WeightedDag> parts;
    for (int s = 0; s < 30; ++s) parts.push_back(random_dag(5, 6, rng));
    const ParticleSet init(parts);
    const auto sp = SurrogatePrior::fit(init);
    for (const auto& w : parts) CHECK(std::isfinite(sp.log_density(w)));
}

TEST_CASE("local log_ratio matches the full density difference") {
    StreamRng rng(26, Stream::scratch);
    std::vector<WeightedDag> parts;
    for (int s = 0; s < 20; ++s) parts.push_back(random_dag(5, 6, rng));
    const auto sp = SurrogatePrior::fit(ParticleSet(parts));
    const UniformPrior up(0.5, 1.5);
    for (int k = 0; k < 300; ++k) {
        const WeightedDag w = random_dag(5, 6, rng);
        const std::size_t i = rng.below(5);
        std::size_t j = rng.below(4);
        if (j >= i) ++j;
        GraphEdit e{GraphEdit::Kind::add, i, j, rng.uniform(0.5, 1.5)};
        if (w.has_edge(i, j)) e.kind = rng.bernoulli(0.5) ? GraphEdit::Kind::remove : GraphEdit::Kind::flip;
        else if (w.has_edge(j, i)) continue;
        const auto edited = apply_edit(w, e);
        if (!edited) continue;
        CHECK(sp.log_ratio(w, *edited, e) ==
              doctest::Approx(sp.log_density(*edited) - sp.log_density(w)).epsilon(1e-12));
        CHECK(up.log_ratio(w, *edited, e) ==
              doctest::Approx(up.log_density(*edited) - up.log_density(w)).epsilon(1e-12));
    }
}

TEST_CASE("property: sequential reweighting equals exact Bayes on the support") {
    StreamRng rng(27, Stream::scratch);
    for (int rep = 0; rep < 50; ++rep) {
        ExpertParams p;
        p.beta_edge = rng.uniform(0.5, 10.0);
        p.beta_dir = rng.uniform(0.5, 10.0);
        p.prob_floor = 1e-9;
        std::vector<WeightedDag> parts;
        for (int s = 0; s < 12; ++s) parts.push_back(random_dag(4, 5, rng));
        std::vector<double> w0(parts.size());
        for (auto& x : w0) x = rng.uniform(0.1, 1.0);
        const double z = std::accumulate(w0.begin(), w0.end(), 0.0);
        for (auto& x : w0) x /= z;
        ParticleSet pset(parts, w0);
        std::vector<long double> exact(w0.begin(), w0.end());
        for (int t = 0; t < 10; ++t) {
            const std::size_t i = rng.below(4);
            std::size_t j = rng.below(3);
            if (j >= i) ++j;
            const Label y = label_from_int(static_cast<int>(rng.below(3)));
            reweight_in_place(pset, i, j, y, p);
            for (std::size_t s = 0; s < parts.size(); ++s)
                exact[s] *= ref::likelihood(parts[s].weight(i, j), parts[s].weight(j, i), p.beta_edge, p.beta_dir,
                                            p.gamma, p.epsilon, p.prob_floor)[index_of(y)];
        }
        long double total = 0.0L;
        for (auto x : exact) total += x;
        for (std::size_t s = 0; s < parts.size(); ++s)
            CHECK(std::abs(pset.weight(s) - static_cast<double>(exact[s] / total)) <= 1e-12);
    }
}

TEST_CASE("rejuvenation: empty history and flat prior accept every acyclic proposal") {
    RejuvenationOptions opts;
    opts.hastings_correction = false;
    opts.mh_steps = 50;
    const UniformPrior flat;
    StreamRng rng(28, Stream::scratch);
    std::vector<WeightedDag> parts;
    for (int s = 0; s < 40; ++s) parts.push_back(random_dag(5, 4, rng));
    ParticleSet pset(parts);
    const auto st = rejuvenate(pset, History{}, sharp(), flat, opts, RngFactory(1), 1);
    CHECK(st.proposed == 40u * 50u);
    CHECK(st.rejected_cycle > 0);
    CHECK(st.accepted == st.proposed - st.rejected_cycle);
}

TEST_CASE("rejuvenation: cycle-closing proposals are rejected regardless of the target") {
    // 0 -> 1 -> 2 with a history strongly asking for 2 -> 0
    History h;
    for (int t = 1; t <= 5; ++t) h.append({t, 2, 0, Label::forward, "EIG", {}, {}});
    const HistoryIndex index(h, 3);
    RejuvenationOptions opts;
    StreamRng rng(29, Stream::scratch);
    for (int k = 0; k < 2000; ++k) {
        WeightedDag w = WeightedDag::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}});
        RejuvenationStats st;
        mh_step(w, index, sharp(), UniformPrior(0.5, 1.5), opts, rng, st, nullptr);
        REQUIRE(is_acyclic(w.adjacency()));
        CHECK_FALSE(w.has_edge(2, 0));
    }
}

TEST_CASE("property: rejuvenation never produces a cyclic particle") {
    StreamRng rng(30, Stream::scratch);
    History h;
    for (int t = 1; t <= 20; ++t) {
        const std::size_t i = rng.below(8);
        std::size_t j = rng.below(7);
        if (j >= i) ++j;
        h.append({t, i, j, label_from_int(static_cast<int>(rng.below(3))), "RND", {}, {}});
    }
    const HistoryIndex index(h, 8);
    RejuvenationOptions opts;
    opts.add_weight_low = -1.5;
    const UniformPrior flat;
    RejuvenationStats st;
    WeightedDag w = random_dag(8, 10, rng);
    for (int k = 0; k < 100000; ++k) {
        mh_step(w, index, sharp(), flat, opts, rng, st, nullptr);
        REQUIRE(is_acyclic(w.adjacency()));
    }
    CHECK(st.accepted > 0);
    CHECK(st.rejected_cycle > 0);
}

TEST_CASE("rejuvenation is reproducible and thread-count independent") {
    StreamRng rng(31, Stream::scratch);
    std::vector<WeightedDag> parts;
    for (int s = 0; s < 64; ++s) parts.push_back(random_dag(6, 6, rng));
    History h;
    h.append({1, 0, 1, Label::forward, "EIG", {}, {}});
    h.append({2, 2, 3, Label::none, "EIG", {}, {}});
    const auto prior = SurrogatePrior::fit(ParticleSet(parts));
    RejuvenationOptions opts;
    opts.mh_steps = 5;
    ParticleSet a(parts), b(parts);
    std::vector<double> lp(parts.size());
    for (std::size_t s = 0; s < parts.size(); ++s) lp[s] = prior.log_density(parts[s]);
    a.set_log_prior(lp);
    b.set_log_prior(lp);
    opts.threads = 1;
    rejuvenate(a, h, sharp(), prior, opts, RngFactory(9), 3);
    opts.threads = 4;
    rejuvenate(b, h, sharp(), prior, opts, RngFactory(9), 3);
    for (std::size_t s = 0; s < parts.size(); ++s) {
        CHECK(a.particle(s) == b.particle(s));
        CHECK(a.log_prior()[s] == b.log_prior()[s]);
        // the tracked surrogate log prior follows the particle
        CHECK(a.log_prior()[s] == doctest::Approx(prior.log_density(a.particle(s))).epsilon(1e-10));
    }
}

TEST_CASE("history index groups records by unordered pair") {
    History h;
    h.append({1, 0, 1, Label::forward, "EIG", {}, {}});
    h.append({2, 1, 0, Label::reverse, "EIG", {}, {}});
    h.append({3, 1, 2, Label::none, "EIG", {}, {}});
    const HistoryIndex index(h, 3);
    CHECK(index.on_pair(0, 1).size() == 2);
    CHECK(index.on_pair(1, 0).size() == 2);
    CHECK(index.on_pair(2, 1).size() == 1);
    CHECK(index.on_pair(0, 2).empty());
}

TEST_CASE("weights must stay normalized") {
    ParticleSet p({WeightedDag(2), WeightedDag(2)});
    CHECK_THROWS_AS(p.set_weights({0.5, 0.6}), ContractError);
    CHECK_THROWS_AS(p.set_weights({-0.1, 1.1}), ContractError);
    CHECK_THROWS_AS(ParticleSet({WeightedDag(2), WeightedDag(3)}), ContractError);
}
}
