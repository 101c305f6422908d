#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cape/acquisition.hpp"
#include "cape/expert.hpp"
#include "cape/io.hpp"
#include "cape/metrics.hpp"
#include "cape/oracle.hpp"
#include "cape/particles.hpp"
#include "cape/posterior.hpp"
#include "cape/prior.hpp"
#include "cape/rng.hpp"

namespace cape {

struct TruthSpec {
    std::string kind = "erdos_renyi";  // erdos_renyi | file | sachs_reference | none
    std::size_t d = 10;
    double edge_prob = 0.25;
    double weight_low = 0.5;
    double weight_high = 1.5;
    std::string path;
};

struct OracleSpec {
    std::string kind = "simulated";  // simulated | deterministic | effect_graph | human
    /// Oracle-side expert parameters; defaults to the learner's when absent.
    std::optional<ExpertParams> expert;
    bool sticky = false;
    std::string graph;  // effect-graph JSON for kind = effect_graph
    double timeout_s = 600.0;
};

struct PriorSpec {
    std::string kind = "perturbed";  // perturbed | bootstrap | snapshot
    PerturbOptions perturb;
    std::string data;                 // bootstrap: observational CSV
    std::string preset = "none";      // bootstrap: sachs | causalbench | none
    BootstrapOptions bootstrap;
    std::size_t top_variance = 0;     // bootstrap: keep the K highest-variance columns
    std::string path;                 // snapshot: particle snapshot JSON
};

struct MetricSpec {
    std::string pair_set = "candidates";  // candidates | all
    ShdMode shd_mode = ShdMode::formula;
};

struct OutputSpec {
    std::string dir;  // empty: keep everything in memory
    int checkpoint_every = 25;
};

/// Everything a run needs. JSON field names mirror the member names.
struct SessionConfig {
    std::uint64_t seed = 0;
    int rounds = 90;
    std::size_t particles = 2000;
    Policy policy = Policy::eig;
    std::size_t screen_k = 30;
    ScreenMode screen_mode = ScreenMode::ordered;
    bool allow_requery = true;
    double ess_threshold = 0.5;
    bool rejuvenation = true;
    RejuvenationOptions mh;  // mh_steps, add_weight_low/high, perturb_sd, hastings_correction
    unsigned threads = 1;
    ExpertParams expert;
    OracleSpec oracle;
    TruthSpec truth;
    PriorSpec prior;
    MetricSpec metrics;
    OutputSpec output;
    /// Directory used to resolve relative paths in the config.
    std::filesystem::path base_dir;

    void validate() const;
};

ExpertParams expert_from_json(const json& j, const ExpertParams& defaults = {});
json expert_to_json(const ExpertParams& p);
SessionConfig config_from_json(const json& j, const std::filesystem::path& base_dir = {});
json config_to_json(const SessionConfig& c);
SessionConfig load_config(const std::filesystem::path& path);

/// The reference Sachs signalling network (17 edges, unit weights) in the
/// column order Raf, Mek, Plcg, PIP2, PIP3, Erk, Akt, PKA, PKC, P38, Jnk.
WeightedDag sachs_reference_graph();
/// Reorders a named graph to match `names` (case-insensitive).
WeightedDag align_graph(const WeightedDag& g, const std::vector<std::string>& names);

struct RoundMetrics {
    double entropy = 0.0;
    std::optional<double> etcp, brier, shd, skel_f1, orient_f1, auprc, auroc, topk;
};

json metrics_to_json(const RoundMetrics& m);
std::vector<std::string> metric_names();
/// Values in metric_names() order; NaN for metrics without a target.
std::vector<double> metric_values(const RoundMetrics& m);

struct RoundResult {
    int round = 0;
    Pair pair;
    Label label = Label::none;
    double u = 0.0;
    std::optional<double> eig;
    CategoricalDist3 predictive;
    double ess_before = 0.0;
    bool resampled = false;
    std::optional<double> accept_rate;
    RoundMetrics metrics;
};

/// One CaPE run: screen, select, query, update, record.
class Session {
public:
    enum class Status { completed, paused, exhausted, finished };

    /// Builds truth, prior and oracle from the config. `initial` and `oracle`
    /// override the configured prior and oracle.
    explicit Session(SessionConfig cfg, std::optional<ParticleSet> initial = {},
                     std::shared_ptr<Oracle> oracle = {});
    ~Session();
    Session(const Session&) = delete;
    Session& operator=(const Session&) = delete;

    /// Runs one round. `paused` means the oracle timed out; nothing changed
    /// and the same query is re-selected on the next call.
    Status run_round();
    /// Runs until finished, exhausted or paused.
    Status run();

    /// Applies a recorded answer without selection: the same update path as
    /// run_round, so replaying a history reproduces the weights.
    RoundResult apply_answer(Pair pair, Label y, const std::string& policy, std::optional<double> eig = {},
                             double u = 0.0, CategoricalDist3 predictive = {});

    int round() const { return static_cast<int>(history_.size()); }
    bool finished() const { return round() >= cfg_.rounds || exhausted_; }
    const std::string& stop_reason() const { return stop_reason_; }
    const SessionConfig& config() const { return cfg_; }
    const ParticleSet& particles() const { return pset_; }
    const ParticleSet& initial_particles() const { return initial_; }
    const History& history() const { return history_; }
    const std::optional<WeightedDag>& truth() const { return truth_; }
    const std::optional<Adjacency>& target() const { return target_; }
    const std::vector<RoundResult>& results() const { return results_; }
    const RoundMetrics& initial_metrics() const { return initial_metrics_; }
    const std::vector<Pair>& static_order() const { return static_ranking_; }
    const std::vector<std::string>& names() const { return names_; }
    std::shared_ptr<HumanChannel> human_channel() const { return channel_; }
    /// The query the next run_round would ask, if one is pending on a human.
    std::optional<Query> pending_query() const;

    /// Full JSONL log (header line first) as written so far.
    const std::vector<std::string>& log_lines() const { return log_lines_; }
    std::string metrics_csv() const;
    RoundMetrics compute_metrics(const PredictiveTable& table) const;

    /// Writes log, metrics CSV and final snapshot under output.dir.
    void finalize();
    json checkpoint_json() const;
    void write_checkpoint();
    /// Restores particles and history from a checkpoint written by this
    /// configuration.
    void restore(const json& checkpoint);

    /// FNV-1a hash of the serialized initial particle set.
    std::uint64_t initial_hash() const;

private:
    void build();
    const PredictiveTable& current_table();
    std::vector<Pair> queried_pairs() const;
    void append_log(const std::string& line);
    std::filesystem::path out_path(const std::string& name) const;

    SessionConfig cfg_;
    RngFactory rngs_;
    std::vector<std::string> names_;
    std::optional<WeightedDag> truth_;
    std::optional<Adjacency> target_;
    ParticleSet initial_;
    ParticleSet pset_;
    History history_;
    std::shared_ptr<Oracle> oracle_;
    std::shared_ptr<HumanChannel> channel_;
    std::unique_ptr<LogPrior> rejuvenation_prior_;
    std::vector<Pair> static_ranking_;
    std::unique_ptr<PredictiveTable> table_;
    std::optional<Query> pending_;
    std::vector<RoundResult> results_;
    RoundMetrics initial_metrics_;
    std::vector<std::string> log_lines_;
    std::ofstream log_stream_;
    bool exhausted_ = false;
    std::string stop_reason_;
    bool finalized_ = false;
};

std::uint64_t fnv1a(const std::string& s);

}  // namespace cape
