#include "doctest.h"

#include <cmath>
#include <numeric>

#include "cape/errors.hpp"
#include "cape/expert.hpp"
#include "cape/rng.hpp"
#include "reference.hpp"

using namespace cape;

namespace {

ExpertParams base_params() {
    ExpertParams p;
    p.beta_edge = 10.0;
    p.beta_dir = 10.0;
    p.gamma = 0.1;
    p.epsilon = 1e-6;
    p.lambda = 0.0;
    p.prob_floor = 0.0;
    return p;
}

WeightedDag one_edge(double w) { return WeightedDag::from_edges(2, {{0, 1, w}}); }

}  // namespace

TEST_SUITE("expert_model") {
TEST_CASE("direction_score examples") {
    const auto p = base_params();
    CHECK(direction_score(one_edge(1.0), 0, 1, p) == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(direction_score(one_edge(1.0), 1, 0, p) == doctest::Approx(-13.815511).epsilon(1e-6));
    CHECK(direction_score(one_edge(1.0), 0, 1, p) == std::log(10.0 + 1e-6));
}

TEST_CASE("lambda = 0 ignores the feature context") {
    auto p = base_params();
    p.feature = FeatureKind::posterior_log_odds;
    const ParticleSet ctx({WeightedDag::from_edges(2, {{1, 0, 1.0}})});
    CHECK(direction_score(one_edge(1.0), 0, 1, p) == direction_score(one_edge(1.0), 0, 1, p, &ctx));
}

TEST_CASE("missing feature context is a configuration error") {
    auto p = base_params();
    p.lambda = 1.0;
    p.feature = FeatureKind::cycle_risk;
    CHECK_THROWS_AS(direction_score(one_edge(1.0), 0, 1, p), ConfigError);
}

TEST_CASE("pair_stats examples") {
    const auto p = base_params();
    const auto st = pair_stats(one_edge(1.0), 0, 1, p);
    CHECK(st.a == doctest::Approx(2.302585).epsilon(1e-6));
    CHECK(st.d == doctest::Approx(16.118096).epsilon(1e-6));
    const auto empty = pair_stats(WeightedDag(2), 0, 1, p);
    CHECK(empty.d == 0.0);
    CHECK(empty.a == std::log(1e-6));
    const auto swapped = pair_stats(one_edge(1.0), 1, 0, p);
    CHECK(swapped.a == st.a);
    CHECK(swapped.d == -st.d);
}

TEST_CASE("likelihood examples") {
    const auto p = base_params();
    const auto strong = likelihood(one_edge(1.0), 0, 1, p);
    CHECK(strong.p[1] >= 1.0 - 1e-9);
    const auto none = likelihood(WeightedDag(2), 0, 1, p);
    CHECK(none.p[2] >= 1.0 - 1e-9);
    auto flat = p;
    flat.beta_edge = 0.0;
    flat.beta_dir = 0.0;
    for (const auto& w : {WeightedDag(2), one_edge(0.01), one_edge(-7.0)}) {
        const auto q = likelihood(w, 0, 1, flat);
        CHECK(q.p[0] == 0.25);
        CHECK(q.p[1] == 0.25);
        CHECK(q.p[2] == 0.5);
    }
}

TEST_CASE("likelihood agrees with the independent scalar formula") {
    StreamRng rng(5, Stream::scratch);
    for (int k = 0; k < 2000; ++k) {
        ExpertParams p = base_params();
        p.beta_edge = rng.uniform(0.0, 20.0);
        p.beta_dir = rng.uniform(0.0, 20.0);
        p.gamma = rng.uniform(0.05, 2.0);
        p.prob_floor = rng.bernoulli(0.5) ? 0.0 : 1e-6;
        const double w = rng.bernoulli(0.3) ? 0.0 : rng.uniform(-2.0, 2.0);
        const bool forward = rng.bernoulli(0.5);
        const auto lib = likelihood_from_weights(forward ? w : 0.0, forward ? 0.0 : w, 0.0, p);
        const auto oracle = ref::likelihood(forward ? w : 0.0, forward ? 0.0 : w, p.beta_edge, p.beta_dir, p.gamma,
                                            p.epsilon, p.prob_floor);
        for (int y = 0; y < 3; ++y) CHECK(lib.p[y] == doctest::Approx(oracle[y]).epsilon(1e-12).scale(1.0));
    }
}

TEST_CASE("property: likelihood sums to one and respects the floor") {
    StreamRng rng(6, Stream::scratch);
    for (int k = 0; k < 100000; ++k) {
        ExpertParams p = base_params();
        p.beta_edge = rng.uniform(0.0, 30.0);
        p.beta_dir = rng.uniform(0.0, 30.0);
        p.gamma = rng.uniform(0.01, 3.0);
        p.prob_floor = rng.bernoulli(0.5) ? 0.0 : rng.uniform(0.0, 0.3);
        const double wij = rng.bernoulli(0.5) ? 0.0 : rng.normal(0.0, 2.0);
        const auto q = likelihood_from_weights(wij, 0.0, 0.0, p);
        const double s = q.p[0] + q.p[1] + q.p[2];
        REQUIRE(std::abs(s - 1.0) <= 1e-12);
        for (double x : q.p) {
            REQUIRE(x >= 0.0);
            REQUIRE(x >= p.prob_floor * (1.0 - 1e-12));
        }
    }
}

TEST_CASE("property: p[1] increases with |W_ij| when lambda = 0") {
    auto p = base_params();
    p.beta_edge = 0.5;
    p.beta_dir = 0.5;
    double prev = -1.0;
    for (int k = 1; k <= 300; ++k) {
        const double w = 0.01 * k;
        const double p1 = likelihood(one_edge(w), 0, 1, p).p[1];
        CHECK(p1 > prev);
        prev = p1;
    }
}

TEST_CASE("property: label symmetry under pair swap") {
    StreamRng rng(7, Stream::scratch);
    for (int k = 0; k < 1000; ++k) {
        auto p = base_params();
        p.beta_edge = rng.uniform(0.0, 20.0);
        p.beta_dir = rng.uniform(0.0, 20.0);
        p.prob_floor = rng.bernoulli(0.5) ? 0.0 : 1e-9;
        const auto w = one_edge(rng.uniform(-2.0, 2.0));
        const auto f = likelihood(w, 0, 1, p), b = likelihood(w, 1, 0, p);
        CHECK(f.p[1] == doctest::Approx(b.p[0]).epsilon(1e-15));
        CHECK(f.p[0] == doctest::Approx(b.p[1]).epsilon(1e-15));
        CHECK(f.p[2] == doctest::Approx(b.p[2]).epsilon(1e-15));
    }
}

TEST_CASE("zero floor leaves the distribution unchanged") {
    const CategoricalDist3 raw{{0.1, 0.0, 0.9}};
    const auto out = apply_floor(raw, 0.0);
    CHECK(out.p == raw.p);
    const auto floored = apply_floor(raw, 0.05);
    CHECK(floored.p[1] == doctest::Approx(0.05));
    CHECK(floored.p[0] + floored.p[1] + floored.p[2] == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("parameter validation") {
    auto p = base_params();
    p.gamma = 0.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = base_params();
    p.prob_floor = 0.34;
    CHECK_THROWS_AS(p.validate(), ConfigError);
    p = base_params();
    p.lambda = -1.0;
    CHECK_THROWS_AS(p.validate(), ConfigError);
}

TEST_CASE("posterior log-odds feature examples") {
    const ParticleSet all({one_edge(1.0), one_edge(0.5)});
    CHECK(feature_posterior_log_odds(all, 0, 1, 1e-6) == doctest::Approx(std::log((1.0 + 1e-6) / 1e-6)));
    const ParticleSet even({one_edge(1.0), WeightedDag::from_edges(2, {{1, 0, 1.0}})});
    CHECK(feature_posterior_log_odds(even, 0, 1, 1e-6) == doctest::Approx(0.0));
    const ParticleSet skew({one_edge(1.0), WeightedDag::from_edges(2, {{1, 0, 1.0}})}, {0.75, 0.25});
    CHECK(feature_posterior_log_odds(skew, 0, 1, 1e-6) == doctest::Approx(1.098609).epsilon(1e-6));
    CHECK(feature_posterior_log_odds(skew, 0, 1, 1e-6) == doctest::Approx(std::log(0.750001 / 0.250001)));
}

TEST_CASE("v-structure feature examples") {
    const ParticleSet collider({WeightedDag::from_edges(3, {{0, 2, 1.0}, {1, 2, 1.0}})});
    CHECK(feature_v_structure(collider, 0, 2) == doctest::Approx(1.0));
    CHECK(feature_v_structure(collider, 2, 0) == doctest::Approx(-1.0));
    const ParticleSet empty({WeightedDag(3)});
    CHECK(feature_v_structure(empty, 0, 1) == 0.0);
    CHECK(feature_v_structure(ParticleSet({WeightedDag(2)}), 0, 1) == 0.0);
    // a shielded collider does not count
    const ParticleSet shielded({WeightedDag::from_edges(3, {{0, 2, 1.0}, {1, 2, 1.0}, {0, 1, 1.0}})});
    CHECK(feature_v_structure(shielded, 0, 2) == 0.0);
}

TEST_CASE("cycle-risk feature examples") {
    const ParticleSet chain({WeightedDag::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}})});
    CHECK(feature_cycle_risk(chain, 0, 2) == doctest::Approx(1.0));
    CHECK(feature_cycle_risk(chain, 2, 0) == doctest::Approx(-1.0));
    CHECK(feature_cycle_risk(ParticleSet({WeightedDag(3)}), 0, 2) == 0.0);
}

TEST_CASE("property: features are antisymmetric") {
    StreamRng rng(8, Stream::scratch);
    std::vector<WeightedDag> parts;
    for (int s = 0; s < 20; ++s) {
        WeightedDag w(5);
        for (int k = 0; k < 6; ++k) {
            const std::size_t i = rng.below(5), j = rng.below(5);
            if (i != j && !w.adjacent(i, j)) w.try_apply({GraphEdit::Kind::add, i, j, 1.0});
        }
        parts.push_back(w);
    }
    const ParticleSet pset(parts);
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t j = 0; j < 5; ++j) {
            if (i == j) continue;
            CHECK(feature_v_structure(pset, i, j) == doctest::Approx(-feature_v_structure(pset, j, i)));
            CHECK(feature_cycle_risk(pset, i, j) == doctest::Approx(-feature_cycle_risk(pset, j, i)));
            CHECK(feature_posterior_log_odds(pset, i, j, 1e-6) ==
                  doctest::Approx(-feature_posterior_log_odds(pset, j, i, 1e-6)));
        }
}

TEST_CASE("features shift the direction score by lambda phi") {
    auto p = base_params();
    p.lambda = 0.5;
    p.feature = FeatureKind::cycle_risk;
    const ParticleSet chain({WeightedDag::from_edges(3, {{0, 1, 1.0}, {1, 2, 1.0}})});
    const WeightedDag w(3);
    CHECK(direction_score(w, 0, 2, p, &chain) == doctest::Approx(std::log(1e-6) + 0.5));
    CHECK(feature_value(chain, 0, 2, p) == doctest::Approx(1.0));
    p.feature = FeatureKind::linear;
    p.alpha = {0.0, 0.0, 2.0};
    CHECK(feature_value(chain, 0, 2, p) == doctest::Approx(2.0));
}
}
