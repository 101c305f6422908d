#include "cape/session.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <set>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "cape/errors.hpp"

namespace cape {

namespace {

using ojson = nlohmann::ordered_json;

constexpr double nan = std::numeric_limits<double>::quiet_NaN();

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + k + "' in " + where);
}

template <class T>
T get_or(const json& j, const char* key, const T& fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("bad value for '") + key + "': " + ex.what());
    }
}

std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return {};
    const std::filesystem::path path(p);
    return path.is_absolute() || base.empty() ? path : base / path;
}

ojson opt_json(const std::optional<double>& v) { return v ? ojson(*v) : ojson(nullptr); }

}  // namespace

ExpertParams expert_from_json(const json& j, const ExpertParams& defaults) {
    check_keys(j, {"beta_edge", "beta_dir", "lambda", "gamma", "epsilon", "prob_floor", "feature", "alpha", "odds_epsilon"},
               "expert");
    ExpertParams p = defaults;
    p.beta_edge = get_or(j, "beta_edge", p.beta_edge);
    p.beta_dir = get_or(j, "beta_dir", p.beta_dir);
    p.lambda = get_or(j, "lambda", p.lambda);
    p.gamma = get_or(j, "gamma", p.gamma);
    p.epsilon = get_or(j, "epsilon", p.epsilon);
    p.prob_floor = get_or(j, "prob_floor", p.prob_floor);
    p.feature = feature_kind_from_string(get_or(j, "feature", to_string(p.feature)));
    if (j.contains("alpha")) {
        const auto a = get_or<std::vector<double>>(j, "alpha", {});
        if (a.size() != 3) throw ConfigError("expert.alpha must hold three coefficients");
        p.alpha = {a[0], a[1], a[2]};
    }
    p.odds_epsilon = get_or(j, "odds_epsilon", p.odds_epsilon);
    return p;
}

json expert_to_json(const ExpertParams& p) {
    return json{{"beta_edge", p.beta_edge}, {"beta_dir", p.beta_dir},   {"lambda", p.lambda},
                {"gamma", p.gamma},         {"epsilon", p.epsilon},     {"prob_floor", p.prob_floor},
                {"feature", to_string(p.feature)}, {"alpha", std::vector<double>(p.alpha.begin(), p.alpha.end())},
                {"odds_epsilon", p.odds_epsilon}};
}

SessionConfig config_from_json(const json& j, const std::filesystem::path& base_dir) {
    check_keys(j,
               {"seed", "rounds", "particles", "policy", "screen_k", "screen_mode", "allow_requery", "ess_threshold",
                "rejuvenation", "mh_steps", "mh_hastings_correction", "add_weight_low", "add_weight_high", "perturb_sd",
                "threads", "expert", "oracle", "truth", "prior", "metrics", "output"},
               "config");
    SessionConfig c;
    c.base_dir = base_dir;
    c.seed = get_or<std::uint64_t>(j, "seed", c.seed);
    c.rounds = get_or(j, "rounds", c.rounds);
    c.particles = get_or(j, "particles", c.particles);
    c.policy = policy_from_string(get_or<std::string>(j, "policy", to_string(c.policy)));
    c.screen_k = get_or(j, "screen_k", c.screen_k);
    c.screen_mode = screen_mode_from_string(get_or<std::string>(j, "screen_mode", to_string(c.screen_mode)));
    c.allow_requery = get_or(j, "allow_requery", c.allow_requery);
    c.ess_threshold = get_or(j, "ess_threshold", c.ess_threshold);
    c.rejuvenation = get_or(j, "rejuvenation", c.rejuvenation);
    c.mh.mh_steps = get_or(j, "mh_steps", c.mh.mh_steps);
    c.mh.hastings_correction = get_or(j, "mh_hastings_correction", c.mh.hastings_correction);
    c.mh.add_weight_low = get_or(j, "add_weight_low", c.mh.add_weight_low);
    c.mh.add_weight_high = get_or(j, "add_weight_high", c.mh.add_weight_high);
    c.mh.perturb_sd = get_or(j, "perturb_sd", c.mh.perturb_sd);
    c.threads = get_or(j, "threads", c.threads);
    if (j.contains("expert")) c.expert = expert_from_json(j.at("expert"));

    if (j.contains("oracle")) {
        const auto& o = j.at("oracle");
        check_keys(o, {"kind", "expert", "sticky", "graph", "timeout_s"}, "oracle");
        c.oracle.kind = get_or<std::string>(o, "kind", c.oracle.kind);
        if (o.contains("expert")) c.oracle.expert = expert_from_json(o.at("expert"), c.expert);
        c.oracle.sticky = get_or(o, "sticky", c.oracle.sticky);
        c.oracle.graph = get_or<std::string>(o, "graph", c.oracle.graph);
        c.oracle.timeout_s = get_or(o, "timeout_s", c.oracle.timeout_s);
    }
    if (j.contains("truth")) {
        const auto& t = j.at("truth");
        check_keys(t, {"kind", "d", "edge_prob", "weight_low", "weight_high", "path"}, "truth");
        c.truth.kind = get_or<std::string>(t, "kind", c.truth.kind);
        c.truth.d = get_or(t, "d", c.truth.d);
        c.truth.edge_prob = get_or(t, "edge_prob", c.truth.edge_prob);
        c.truth.weight_low = get_or(t, "weight_low", c.truth.weight_low);
        c.truth.weight_high = get_or(t, "weight_high", c.truth.weight_high);
        c.truth.path = get_or<std::string>(t, "path", c.truth.path);
    }
    if (j.contains("prior")) {
        const auto& p = j.at("prior");
        check_keys(p,
                   {"kind", "flip_prob", "addremove_prob", "weight_noise_sd", "data", "preset", "max_parents", "corr_k",
                    "ridge", "coef_threshold", "raw_scale_weights", "top_variance", "path"},
                   "prior");
        c.prior.kind = get_or<std::string>(p, "kind", c.prior.kind);
        c.prior.perturb.flip_prob = get_or(p, "flip_prob", c.prior.perturb.flip_prob);
        c.prior.perturb.addremove_prob = get_or(p, "addremove_prob", c.prior.perturb.addremove_prob);
        c.prior.perturb.weight_noise_sd = get_or(p, "weight_noise_sd", c.prior.perturb.weight_noise_sd);
        c.prior.data = get_or<std::string>(p, "data", c.prior.data);
        c.prior.preset = get_or<std::string>(p, "preset", c.prior.preset);
        if (c.prior.preset == "sachs") c.prior.bootstrap = BootstrapOptions::sachs();
        else if (c.prior.preset == "causalbench") c.prior.bootstrap = BootstrapOptions::causalbench();
        else if (c.prior.preset != "none") throw ConfigError("unknown bootstrap preset '" + c.prior.preset + "'");
        auto& b = c.prior.bootstrap;
        b.max_parents = get_or(p, "max_parents", b.max_parents);
        b.corr_k = get_or(p, "corr_k", b.corr_k);
        b.ridge = get_or(p, "ridge", b.ridge);
        b.coef_threshold = get_or(p, "coef_threshold", b.coef_threshold);
        b.raw_scale_weights = get_or(p, "raw_scale_weights", b.raw_scale_weights);
        c.prior.top_variance = get_or(p, "top_variance", c.prior.top_variance);
        c.prior.path = get_or<std::string>(p, "path", c.prior.path);
    }
    if (j.contains("metrics")) {
        const auto& m = j.at("metrics");
        check_keys(m, {"pair_set", "shd_mode"}, "metrics");
        c.metrics.pair_set = get_or<std::string>(m, "pair_set", c.metrics.pair_set);
        c.metrics.shd_mode = shd_mode_from_string(get_or<std::string>(m, "shd_mode", to_string(c.metrics.shd_mode)));
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        check_keys(o, {"dir", "checkpoint_every"}, "output");
        c.output.dir = get_or<std::string>(o, "dir", c.output.dir);
        c.output.checkpoint_every = get_or(o, "checkpoint_every", c.output.checkpoint_every);
    }
    c.validate();
    return c;
}

json config_to_json(const SessionConfig& c) {
    json oracle{{"kind", c.oracle.kind}, {"sticky", c.oracle.sticky}, {"graph", c.oracle.graph},
                {"timeout_s", c.oracle.timeout_s}};
    oracle["expert"] = expert_to_json(c.oracle.expert.value_or(c.expert));
    const auto& b = c.prior.bootstrap;
    return json{
        {"seed", c.seed},
        {"rounds", c.rounds},
        {"particles", c.particles},
        {"policy", to_string(c.policy)},
        {"screen_k", c.screen_k},
        {"screen_mode", to_string(c.screen_mode)},
        {"allow_requery", c.allow_requery},
        {"ess_threshold", c.ess_threshold},
        {"rejuvenation", c.rejuvenation},
        {"mh_steps", c.mh.mh_steps},
        {"mh_hastings_correction", c.mh.hastings_correction},
        {"add_weight_low", c.mh.add_weight_low},
        {"add_weight_high", c.mh.add_weight_high},
        {"perturb_sd", c.mh.perturb_sd},
        {"threads", c.threads},
        {"expert", expert_to_json(c.expert)},
        {"oracle", oracle},
        {"truth",
         {{"kind", c.truth.kind},
          {"d", c.truth.d},
          {"edge_prob", c.truth.edge_prob},
          {"weight_low", c.truth.weight_low},
          {"weight_high", c.truth.weight_high},
          {"path", c.truth.path}}},
        {"prior",
         {{"kind", c.prior.kind},
          {"flip_prob", c.prior.perturb.flip_prob},
          {"addremove_prob", c.prior.perturb.addremove_prob},
          {"weight_noise_sd", c.prior.perturb.weight_noise_sd},
          {"data", c.prior.data},
          {"preset", c.prior.preset},
          {"max_parents", b.max_parents},
          {"corr_k", b.corr_k},
          {"ridge", b.ridge},
          {"coef_threshold", b.coef_threshold},
          {"raw_scale_weights", b.raw_scale_weights},
          {"top_variance", c.prior.top_variance},
          {"path", c.prior.path}}},
        {"metrics", {{"pair_set", c.metrics.pair_set}, {"shd_mode", to_string(c.metrics.shd_mode)}}},
        {"output", {{"dir", c.output.dir}, {"checkpoint_every", c.output.checkpoint_every}}},
    };
}

void SessionConfig::validate() const {
    if (rounds < 1) throw ConfigError("rounds must be >= 1");
    if (particles < 1) throw ConfigError("particles must be >= 1");
    if (!(ess_threshold > 0.0 && ess_threshold < 1.0)) throw ConfigError("ess_threshold must be in (0, 1)");
    if (screen_k < 1) throw ConfigError("screen_k must be >= 1");
    if (threads < 1) throw ConfigError("threads must be >= 1");
    if (mh.mh_steps < 0) throw ConfigError("mh_steps must be >= 0");
    if (!(mh.add_weight_low < mh.add_weight_high)) throw ConfigError("add_weight_low must be < add_weight_high");
    if (!(mh.perturb_sd > 0.0)) throw ConfigError("perturb_sd must be > 0");
    expert.validate();
    if (oracle.expert) oracle.expert->validate();
    static const std::set<std::string> oracle_kinds{"simulated", "deterministic", "effect_graph", "human"};
    if (!oracle_kinds.count(oracle.kind)) throw ConfigError("unknown oracle kind '" + oracle.kind + "'");
    static const std::set<std::string> truth_kinds{"erdos_renyi", "file", "sachs_reference", "none"};
    if (!truth_kinds.count(truth.kind)) throw ConfigError("unknown truth kind '" + truth.kind + "'");
    static const std::set<std::string> prior_kinds{"perturbed", "bootstrap", "snapshot"};
    if (!prior_kinds.count(prior.kind)) throw ConfigError("unknown prior kind '" + prior.kind + "'");
    if (metrics.pair_set != "candidates" && metrics.pair_set != "all")
        throw ConfigError("metrics.pair_set must be 'candidates' or 'all'");
    if (output.checkpoint_every < 1) throw ConfigError("output.checkpoint_every must be >= 1");
    if (!(oracle.timeout_s > 0.0)) throw ConfigError("oracle.timeout_s must be > 0");
}

SessionConfig load_config(const std::filesystem::path& path) {
    return config_from_json(read_json_file(path), path.parent_path());
}

WeightedDag sachs_reference_graph() {
    const std::vector<std::string> names{"Raf", "Mek", "Plcg", "PIP2", "PIP3", "Erk", "Akt", "PKA", "PKC", "P38", "Jnk"};
    auto at = [&](const char* n) {
        return static_cast<std::size_t>(std::find(names.begin(), names.end(), n) - names.begin());
    };
    const std::vector<std::pair<const char*, const char*>> edges{
        {"Erk", "Akt"}, {"Mek", "Erk"}, {"PIP3", "PIP2"}, {"PKA", "Akt"}, {"PKA", "Erk"}, {"PKA", "Jnk"},
        {"PKA", "Mek"}, {"PKA", "P38"}, {"PKA", "Raf"},   {"PKC", "Jnk"}, {"PKC", "Mek"}, {"PKC", "P38"},
        {"PKC", "PKA"}, {"PKC", "Raf"}, {"Plcg", "PIP2"}, {"Plcg", "PIP3"}, {"Raf", "Mek"}};
    std::vector<std::tuple<std::size_t, std::size_t, double>> list;
    for (const auto& [a, b] : edges) list.emplace_back(at(a), at(b), 1.0);
    return WeightedDag::from_edges(names.size(), list, names);
}

WeightedDag align_graph(const WeightedDag& g, const std::vector<std::string>& names) {
    if (names.size() != g.d()) throw ConfigError("graph and data disagree on the number of variables");
    std::vector<std::size_t> to_new(g.d());
    for (std::size_t k = 0; k < g.d(); ++k) {
        const std::string want = lower(g.names().at(k));
        auto it = std::find_if(names.begin(), names.end(), [&](const std::string& n) { return lower(n) == want; });
        if (it == names.end()) throw ConfigError("variable '" + g.names()[k] + "' missing from the data columns");
        to_new[k] = static_cast<std::size_t>(it - names.begin());
    }
    std::vector<std::tuple<std::size_t, std::size_t, double>> list;
    for (const auto& e : g.edges()) list.emplace_back(to_new[e.i], to_new[e.j], g.weight(e.i, e.j));
    return WeightedDag::from_edges(g.d(), list, names);
}

std::vector<std::string> metric_names() {
    return {"entropy", "etcp", "brier", "shd", "skel_f1", "orient_f1", "auprc", "auroc", "topk"};
}

std::vector<double> metric_values(const RoundMetrics& m) {
    auto v = [](const std::optional<double>& x) { return x.value_or(nan); };
    return {m.entropy, v(m.etcp), v(m.brier), v(m.shd), v(m.skel_f1), v(m.orient_f1), v(m.auprc), v(m.auroc), v(m.topk)};
}

json metrics_to_json(const RoundMetrics& m) {
    const auto names = metric_names();
    const auto values = metric_values(m);
    json out = json::object();
    for (std::size_t k = 0; k < names.size(); ++k)
        out[names[k]] = std::isnan(values[k]) ? json(nullptr) : json(values[k]);
    return out;
}

std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

Session::Session(SessionConfig cfg, std::optional<ParticleSet> initial, std::shared_ptr<Oracle> oracle)
    : cfg_(std::move(cfg)), rngs_(cfg_.seed), oracle_(std::move(oracle)) {
    cfg_.validate();
    if (initial) initial_ = std::move(*initial);
    build();
}

Session::~Session() = default;

void Session::build() {
    const auto& base = cfg_.base_dir;

    if (cfg_.truth.kind == "erdos_renyi") {
        StreamRng rng = rngs_.stream(Stream::truth);
        std::vector<std::string> names;
        for (std::size_t k = 0; k < cfg_.truth.d; ++k) names.push_back("X" + std::to_string(k));
        truth_ = erdos_renyi_dag(cfg_.truth.d, cfg_.truth.edge_prob, cfg_.truth.weight_low, cfg_.truth.weight_high, rng,
                                 names);
    } else if (cfg_.truth.kind == "file") {
        truth_ = graph_from_json(read_json_file(resolve(base, cfg_.truth.path)));
    } else if (cfg_.truth.kind == "sachs_reference") {
        truth_ = sachs_reference_graph();
    }

    if (initial_.size() == 0) {
        if (cfg_.prior.kind == "perturbed") {
            if (!truth_) throw ConfigError("the perturbed prior needs a ground-truth graph");
            initial_ = perturbed_prior(*truth_, cfg_.prior.perturb, cfg_.particles, rngs_);
        } else if (cfg_.prior.kind == "bootstrap") {
            if (cfg_.prior.data.empty()) throw ConfigError("the bootstrap prior needs prior.data");
            auto table = read_numeric_csv(resolve(base, cfg_.prior.data));
            if (cfg_.prior.top_variance > 0) {
                const auto cols = top_variance_columns(table.values, cfg_.prior.top_variance);
                std::vector<std::string> names;
                for (auto c : cols) names.push_back(table.names[c]);
                table.values = select_columns(table.values, cols);
                table.names = names;
            }
            BootstrapOptions b = cfg_.prior.bootstrap;
            b.particles = cfg_.particles;
            b.threads = cfg_.threads;
            initial_ = bootstrap_linear_prior(table.values, b, rngs_, table.names);
        } else {
            initial_ = snapshot_from_json(read_json_file(resolve(base, cfg_.prior.path)));
        }
    }
    initial_.validate();
    const std::size_t d = initial_.d();
    names_ = initial_.names();
    if (truth_ && !names_.empty() && !truth_->names().empty() && names_ != truth_->names())
        truth_ = align_graph(*truth_, names_);
    if (names_.empty() && truth_) names_ = truth_->names();
    if (names_.empty())
        for (std::size_t k = 0; k < d; ++k) names_.push_back("X" + std::to_string(k));
    if (truth_ && truth_->d() != d) throw ConfigError("truth and prior disagree on the number of variables");

    std::optional<Adjacency> effect;
    if (cfg_.oracle.kind == "effect_graph") {
        const json g = read_json_file(resolve(base, cfg_.oracle.graph));
        Adjacency a = adjacency_from_json(g);
        if (a.d() != d) throw ConfigError("effect graph and prior disagree on the number of variables");
        effect = a;
    }
    if (!oracle_) {
        const ExpertParams theta = cfg_.oracle.expert.value_or(cfg_.expert);
        if (cfg_.oracle.kind == "simulated") {
            if (!truth_) throw ConfigError("the simulated oracle needs a ground-truth graph");
            oracle_ = std::make_shared<SimulatedOracle>(*truth_, theta, cfg_.oracle.sticky);
        } else if (cfg_.oracle.kind == "deterministic") {
            if (!truth_) throw ConfigError("the deterministic oracle needs a ground-truth graph");
            oracle_ = std::make_shared<DeterministicOracle>(*truth_);
        } else if (cfg_.oracle.kind == "effect_graph") {
            oracle_ = std::make_shared<EffectGraphOracle>(*effect);
        } else {
            channel_ = std::make_shared<HumanChannel>();
            const auto ms = std::chrono::milliseconds(static_cast<long long>(cfg_.oracle.timeout_s * 1000.0));
            oracle_ = std::make_shared<HumanOracle>(channel_, ms);
        }
    } else if (auto* human = dynamic_cast<HumanOracle*>(oracle_.get())) {
        channel_ = human->channel();
    }
    if (effect) target_ = effect;
    else if (truth_) target_ = truth_->adjacency();

    auto surrogate = std::make_unique<SurrogatePrior>(SurrogatePrior::fit(initial_));
    if (!initial_.has_log_prior()) {
        std::vector<double> lp(initial_.size());
        for (std::size_t s = 0; s < initial_.size(); ++s) lp[s] = surrogate->log_density(initial_.particle(s));
        initial_.set_log_prior(std::move(lp));
    }
    rejuvenation_prior_ = std::move(surrogate);
    pset_ = initial_;

    initial_metrics_ = compute_metrics(current_table());
    if (cfg_.policy == Policy::static_eig) static_ranking_ = static_ranking(current_table());

    if (!cfg_.output.dir.empty()) {
        std::filesystem::create_directories(out_path(""));
        log_stream_.open(out_path("log.jsonl.partial"), std::ios::binary | std::ios::trunc);
        if (!log_stream_) throw std::runtime_error("cannot open the session log for writing");
    }
    ojson header;
    header["type"] = "header";
    header["rng"] = std::string(rng_version);
    header["config"] = ojson::parse(config_to_json(cfg_).dump());
    header["names"] = names_;
    header["initial_hash"] = fmt::format("{:016x}", initial_hash());
    if (truth_) header["truth"] = ojson::parse(graph_to_json(*truth_).dump());
    header["initial_metrics"] = ojson::parse(metrics_to_json(initial_metrics_).dump());
    append_log(header.dump());
    spdlog::debug("session ready: D={}, S={}, policy={}", d, initial_.size(), to_string(cfg_.policy));
}

std::filesystem::path Session::out_path(const std::string& name) const {
    return resolve(cfg_.base_dir, cfg_.output.dir) / name;
}

void Session::append_log(const std::string& line) {
    log_lines_.push_back(line);
    if (log_stream_.is_open()) {
        log_stream_ << line << '\n';
        log_stream_.flush();
        if (!log_stream_) throw std::runtime_error("writing the session log failed");
    }
}

const PredictiveTable& Session::current_table() {
    if (!table_) table_ = std::make_unique<PredictiveTable>(pset_, cfg_.expert, cfg_.threads);
    return *table_;
}

std::vector<Pair> Session::queried_pairs() const {
    std::vector<Pair> out;
    for (const auto& r : history_.records()) out.push_back({r.i, r.j});
    return out;
}

std::optional<Query> Session::pending_query() const {
    if (channel_)
        if (auto q = channel_->pending()) return q;
    return pending_;
}

RoundMetrics Session::compute_metrics(const PredictiveTable& table) const {
    RoundMetrics m;
    std::vector<Pair> pairs;
    if (cfg_.metrics.pair_set == "all") {
        pairs = all_ordered_pairs(pset_.d());
    } else {
        pairs = screen(edge_marginals(pset_), cfg_.screen_k, cfg_.screen_mode).pairs;
    }
    if (!pairs.empty()) m.entropy = avg_predictive_entropy(table, pairs);
    if (!target_) return m;
    const Adjacency& a = *target_;
    m.etcp = etcp(table, a);
    m.brier = brier(table, a);
    m.shd = shd_posterior(pset_, a, cfg_.metrics.shd_mode);
    m.skel_f1 = skeleton_f1_posterior(pset_, a);
    m.orient_f1 = orientation_f1_posterior(pset_, a);
    std::size_t positives = 0;
    for (std::size_t i = 0; i < a.d(); ++i)
        for (std::size_t j = 0; j < a.d(); ++j) positives += (i != j && a(i, j));
    const std::size_t pairs_total = a.d() * (a.d() - 1);
    if (positives > 0 && positives < pairs_total) {
        const auto marg = edge_marginals(pset_);
        m.auprc = directed_auprc(marg, a);
        m.auroc = directed_auroc(marg, a);
        m.topk = directed_topk_precision(marg, a);
    }
    return m;
}

Session::Status Session::run_round() {
    if (exhausted_) return Status::exhausted;
    if (finished()) return Status::finished;
    const int t = round() + 1;
    const PredictiveTable& table = current_table();
    const auto queried = queried_pairs();
    const auto candidates =
        screen(edge_marginals(pset_), cfg_.screen_k, cfg_.screen_mode, cfg_.allow_requery ? std::vector<Pair>{} : queried);
    StreamRng policy_rng = rngs_.stream(Stream::policy, static_cast<std::uint32_t>(t));
    Selection sel;
    try {
        sel = select_query(candidates, cfg_.policy, &table, policy_rng,
                           cfg_.policy == Policy::static_eig ? &static_ranking_ : nullptr, &queried);
    } catch (const CandidatesExhausted& ex) {
        exhausted_ = true;
        stop_reason_ = ex.what();
        ojson stop;
        stop["type"] = "stop";
        stop["round"] = t;
        stop["reason"] = stop_reason_;
        append_log(stop.dump());
        spdlog::info("session stopped early at round {}: {}", t, stop_reason_);
        return Status::exhausted;
    }
    Query q{t, sel.pair, table.predictive(sel.pair.i, sel.pair.j), sel.eig};
    StreamRng oracle_rng = rngs_.stream(Stream::oracle, static_cast<std::uint32_t>(t));
    Label y;
    try {
        y = oracle_->answer(q, oracle_rng);
    } catch (const OracleTimeout& ex) {
        pending_ = q;
        spdlog::debug("round {} paused: {}", t, ex.what());
        return Status::paused;
    }
    pending_.reset();
    apply_answer(sel.pair, y, to_string(cfg_.policy), sel.eig, sel.u, q.predictive);
    return finished() ? Status::finished : Status::completed;
}

Session::Status Session::run() {
    Status st = Status::completed;
    while (st == Status::completed) st = run_round();
    if (st == Status::finished || st == Status::exhausted) finalize();
    return st;
}

RoundResult Session::apply_answer(Pair pair, Label y, const std::string& policy, std::optional<double> eig, double u,
                                  CategoricalDist3 predictive) {
    const int t = round() + 1;
    if (pair.i == pair.j || pair.i >= pset_.d() || pair.j >= pset_.d()) throw ContractError("invalid query pair");
    QueryRecord rec{t, pair.i, pair.j, y, policy, eig, std::nullopt};
    if (cfg_.expert.needs_features()) rec.frozen_feature = feature_value(pset_, pair.i, pair.j, cfg_.expert);
    reweight_in_place(pset_, pair.i, pair.j, y, cfg_.expert, rec.frozen_feature);
    history_.append(rec);

    RoundResult r;
    r.round = t;
    r.pair = pair;
    r.label = y;
    r.u = u;
    r.eig = eig;
    r.predictive = predictive;
    r.ess_before = ess(pset_.weights());
    r.resampled = r.ess_before < cfg_.ess_threshold * static_cast<double>(pset_.size());
    if (r.resampled) {
        StreamRng rng = rngs_.stream(Stream::resample, static_cast<std::uint32_t>(t));
        pset_ = resample(pset_, rng);
        if (cfg_.rejuvenation && cfg_.mh.mh_steps > 0) {
            RejuvenationOptions opts = cfg_.mh;
            opts.threads = cfg_.threads;
            const auto stats =
                rejuvenate(pset_, history_, cfg_.expert, *rejuvenation_prior_, opts, rngs_, static_cast<std::uint32_t>(t));
            r.accept_rate = stats.accept_rate();
        }
    }
    table_.reset();
    r.metrics = compute_metrics(current_table());
    results_.push_back(r);

    ojson line;
    line["round"] = t;
    line["pair"] = {pair.i, pair.j};
    line["label"] = index_of(y);
    line["policy"] = policy;
    line["eig"] = opt_json(eig);
    line["u"] = u;
    line["predictive"] = {predictive.p[0], predictive.p[1], predictive.p[2]};
    line["ess_before"] = r.ess_before;
    line["resampled"] = r.resampled;
    line["rejuvenation_accept_rate"] = opt_json(r.accept_rate);
    if (rec.frozen_feature) line["feature"] = *rec.frozen_feature;
    line["metrics"] = ojson::parse(metrics_to_json(r.metrics).dump());
    append_log(line.dump());

    if (!cfg_.output.dir.empty() && (r.resampled || t % cfg_.output.checkpoint_every == 0)) write_checkpoint();
    return r;
}

std::string Session::metrics_csv() const {
    std::string out = "# config=" + config_to_json(cfg_).dump() + "\n";
    out += "round";
    for (const auto& n : metric_names()) out += "," + n;
    out += "\n";
    for (const auto& r : results_) {
        out += std::to_string(r.round);
        for (double v : metric_values(r.metrics)) out += "," + (std::isnan(v) ? std::string("nan") : fmt::format("{}", v));
        out += "\n";
    }
    return out;
}

json Session::checkpoint_json() const {
    json hist = json::array();
    for (const auto& r : history_.records()) hist.push_back(record_to_json(r));
    json ranking = json::array();
    for (const auto& p : static_ranking_) ranking.push_back(json::array({p.i, p.j}));
    return json{{"version", 1},
                {"rng", {{"version", std::string(rng_version)}, {"seed", cfg_.seed}}},
                {"round", round()},
                {"config", config_to_json(cfg_)},
                {"particles", snapshot_to_json(pset_)},
                {"history", std::move(hist)},
                {"static_ranking", std::move(ranking)},
                {"initial_hash", fmt::format("{:016x}", initial_hash())}};
}

void Session::write_checkpoint() {
    if (cfg_.output.dir.empty()) return;
    write_text_atomic(out_path("checkpoint.json"), checkpoint_json().dump());
}

void Session::restore(const json& cp) {
    try {
        if (cp.at("rng").at("seed").get<std::uint64_t>() != cfg_.seed)
            throw ConfigError("checkpoint was written with a different seed");
        ParticleSet restored = snapshot_from_json(cp.at("particles"));
        if (restored.d() != pset_.d()) throw ConfigError("checkpoint dimension does not match the session");
        History h;
        for (const auto& r : cp.at("history")) h.append(record_from_json(r));
        std::vector<Pair> ranking;
        for (const auto& p : cp.at("static_ranking")) ranking.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
        pset_ = std::move(restored);
        history_ = std::move(h);
        if (!ranking.empty()) static_ranking_ = std::move(ranking);
        table_.reset();
        pending_.reset();
        ojson line;
        line["type"] = "resume";
        line["round"] = round();
        append_log(line.dump());
    } catch (const json::exception& ex) {
        throw ConfigError(std::string("malformed checkpoint: ") + ex.what());
    }
}

void Session::finalize() {
    if (finalized_) return;
    finalized_ = true;
    if (cfg_.output.dir.empty()) return;
    log_stream_.close();
    std::filesystem::rename(out_path("log.jsonl.partial"), out_path("log.jsonl"));
    write_text_atomic(out_path("metrics.csv"), metrics_csv());
    write_text_atomic(out_path("final_snapshot.json"), snapshot_to_json(pset_).dump());
    write_checkpoint();
}

std::uint64_t Session::initial_hash() const { return fnv1a(snapshot_to_json(initial_).dump()); }

}  // namespace cape
