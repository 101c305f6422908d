#include "cape/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <spdlog/spdlog.h>

#include "cape/errors.hpp"
#include "cape/posterior.hpp"

namespace cape {

namespace {

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

void check_dims(std::size_t a, std::size_t b) {
    if (a != b) throw ContractError("metric inputs disagree on node count");
}

F1Parts f1_from_counts(std::size_t hits, std::size_t predicted, std::size_t truth) {
    if (predicted == 0 && truth == 0) return {1.0, 1.0, 1.0};
    F1Parts out;
    out.precision = predicted == 0 ? 0.0 : static_cast<double>(hits) / predicted;
    out.recall = truth == 0 ? 0.0 : static_cast<double>(hits) / truth;
    const double s = out.precision + out.recall;
    out.f1 = s == 0.0 ? 0.0 : 2.0 * out.precision * out.recall / s;
    return out;
}

void ranking_pairs(const Square<double>& scores, const Adjacency& target, std::vector<double>& s, std::vector<int>& y) {
    check_dims(scores.d(), target.d());
    for (std::size_t i = 0; i < scores.d(); ++i)
        for (std::size_t j = 0; j < scores.d(); ++j) {
            if (i == j) continue;
            s.push_back(scores(i, j));
            y.push_back(target(i, j) ? 1 : 0);
        }
}

}  // namespace

double avg_predictive_entropy(const PredictiveTable& table, const std::vector<Pair>& pairs) {
    if (pairs.empty()) throw ContractError("average entropy needs a nonempty pair list");
    double total = 0.0;
    for (const auto& p : pairs) total += entropy3(table.predictive(p.i, p.j));
    return total / static_cast<double>(pairs.size());
}

double avg_predictive_entropy(const ParticleSet& pset, const std::vector<Pair>& pairs, const ExpertParams& params) {
    return avg_predictive_entropy(PredictiveTable(pset, params, pairs), pairs);
}

double etcp(const PredictiveTable& table, const Adjacency& target) {
    check_dims(table.d(), target.d());
    const std::size_t d = target.d();
    if (d < 2) return nan;
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j)
            if (i != j) total += table.predictive(i, j)[target_label(target, i, j)];
    return total / static_cast<double>(d * (d - 1));
}

double etcp(const ParticleSet& pset, const WeightedDag& w_star, const ExpertParams& params) {
    return etcp(PredictiveTable(pset, params), w_star.adjacency());
}

double brier(const PredictiveTable& table, const Adjacency& target) {
    check_dims(table.d(), target.d());
    const std::size_t d = target.d();
    if (d < 2) return nan;
    double total = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            const auto& p = table.predictive(i, j);
            const std::size_t y = index_of(target_label(target, i, j));
            for (std::size_t k = 0; k < 3; ++k) {
                const double diff = p.p[k] - (k == y ? 1.0 : 0.0);
                total += diff * diff;
            }
        }
    return total / static_cast<double>(d * (d - 1));
}

double brier(const ParticleSet& pset, const WeightedDag& w_star, const ExpertParams& params) {
    return brier(PredictiveTable(pset, params), w_star.adjacency());
}

std::string to_string(ShdMode m) { return m == ShdMode::formula ? "formula" : "flip1"; }

ShdMode shd_mode_from_string(const std::string& s) {
    if (s == "formula") return ShdMode::formula;
    if (s == "flip1") return ShdMode::flip1;
    throw ConfigError("unknown shd_mode '" + s + "'");
}

double shd(const Adjacency& a, const Adjacency& target, ShdMode mode) {
    check_dims(a.d(), target.d());
    std::size_t count = 0;
    for (std::size_t i = 0; i < a.d(); ++i)
        for (std::size_t j = 0; j < a.d(); ++j) {
            if (i == j) continue;
            if (mode == ShdMode::formula) {
                count += (a(i, j) != 0) != (target(i, j) != 0);
            } else if (i < j) {
                count += ((a(i, j) != 0) != (target(i, j) != 0)) || ((a(j, i) != 0) != (target(j, i) != 0));
            }
        }
    return static_cast<double>(count);
}

double shd_posterior(const ParticleSet& pset, const Adjacency& target, ShdMode mode) {
    double total = 0.0;
    for (std::size_t s = 0; s < pset.size(); ++s) total += pset.weight(s) * shd(pset.particle(s).adjacency(), target, mode);
    return total;
}

F1Parts skeleton_f1(const Adjacency& a, const Adjacency& target) {
    check_dims(a.d(), target.d());
    std::size_t hits = 0, predicted = 0, truth = 0;
    for (std::size_t i = 0; i < a.d(); ++i)
        for (std::size_t j = i + 1; j < a.d(); ++j) {
            const bool p = a(i, j) || a(j, i);
            const bool t = target(i, j) || target(j, i);
            predicted += p;
            truth += t;
            hits += p && t;
        }
    return f1_from_counts(hits, predicted, truth);
}

F1Parts orientation_f1(const Adjacency& a, const Adjacency& target) {
    check_dims(a.d(), target.d());
    std::size_t hits = 0, predicted = 0, truth = 0;
    for (std::size_t i = 0; i < a.d(); ++i)
        for (std::size_t j = 0; j < a.d(); ++j) {
            if (i == j) continue;
            predicted += a(i, j) != 0;
            truth += target(i, j) != 0;
            hits += a(i, j) && target(i, j);
        }
    return f1_from_counts(hits, predicted, truth);
}

double skeleton_f1_posterior(const ParticleSet& pset, const Adjacency& target) {
    double total = 0.0;
    for (std::size_t s = 0; s < pset.size(); ++s)
        total += pset.weight(s) * skeleton_f1(pset.particle(s).adjacency(), target).f1;
    return total;
}

double orientation_f1_posterior(const ParticleSet& pset, const Adjacency& target) {
    double total = 0.0;
    for (std::size_t s = 0; s < pset.size(); ++s)
        total += pset.weight(s) * orientation_f1(pset.particle(s).adjacency(), target).f1;
    return total;
}

double average_precision(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ContractError("score and label lists differ in length");
    const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (positives == 0) {
        spdlog::warn("AUPRC undefined: no positive pairs in the target");
        return nan;
    }
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    double ap = 0.0, prev_recall = 0.0;
    std::size_t tp = 0, seen = 0;
    for (std::size_t k = 0; k < order.size();) {
        // one threshold per distinct score
        std::size_t end = k;
        while (end < order.size() && scores[order[end]] == scores[order[k]]) {
            tp += labels[order[end]] == 1;
            ++end;
        }
        seen = end;
        const double recall = static_cast<double>(tp) / positives;
        const double precision = static_cast<double>(tp) / seen;
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        k = end;
    }
    return ap;
}

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw ContractError("score and label lists differ in length");
    const std::size_t n = scores.size();
    const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    const std::size_t negatives = n - positives;
    if (positives == 0 || negatives == 0) {
        spdlog::warn("AUROC undefined: target has {} positive and {} negative pairs", positives, negatives);
        return nan;
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    double rank_sum = 0.0;
    for (std::size_t k = 0; k < n;) {
        std::size_t end = k;
        while (end < n && scores[order[end]] == scores[order[k]]) ++end;
        const double midrank = 0.5 * static_cast<double>(k + 1 + end);
        for (std::size_t r = k; r < end; ++r)
            if (labels[order[r]] == 1) rank_sum += midrank;
        k = end;
    }
    const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
    return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double topk_precision(const std::vector<double>& scores, const std::vector<int>& labels, std::size_t k) {
    if (scores.size() != labels.size()) throw ContractError("score and label lists differ in length");
    const std::size_t positives = static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1));
    if (k == 0) k = positives;
    if (k == 0) {
        spdlog::warn("top-k precision undefined: no positive pairs in the target");
        return nan;
    }
    k = std::min(k, scores.size());
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::size_t hits = 0;
    for (std::size_t r = 0; r < k; ++r) hits += labels[order[r]] == 1;
    return static_cast<double>(hits) / static_cast<double>(k);
}

double directed_auprc(const Square<double>& scores, const Adjacency& target) {
    std::vector<double> s;
    std::vector<int> y;
    ranking_pairs(scores, target, s, y);
    return average_precision(s, y);
}

double directed_auroc(const Square<double>& scores, const Adjacency& target) {
    std::vector<double> s;
    std::vector<int> y;
    ranking_pairs(scores, target, s, y);
    return auroc(s, y);
}

double directed_topk_precision(const Square<double>& scores, const Adjacency& target, std::size_t k) {
    std::vector<double> s;
    std::vector<int> y;
    ranking_pairs(scores, target, s, y);
    return topk_precision(s, y, k);
}

Square<double> orientation_marginals(const ParticleSet& pset) {
    const auto p = edge_marginals(pset);
    const std::size_t d = p.d();
    Square<double> out(d, 0.0);
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            if (i == j) continue;
            // the two directions are exclusive within a DAG
            const double adj = p(i, j) + p(j, i);
            out(i, j) = adj > 0.0 ? p(i, j) / adj : 0.5;
        }
    return out;
}

}  // namespace cape
