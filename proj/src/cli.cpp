#include "cape/cli.hpp"

#include <atomic>
#include <cmath>
#include <csignal>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <spdlog/fmt/fmt.h>
#include <spdlog/spdlog.h>

#include "cape/errors.hpp"
#include "cape/io.hpp"
#include "cape/server.hpp"

namespace cape::cli {

namespace {

std::atomic<bool> g_interrupted{false};

extern "C" void on_signal(int) { g_interrupted = true; }

std::string format_value(double v) { return std::isnan(v) ? std::string("nan") : fmt::format("{}", v); }

/// Runs task(k) for k in [0, n) on up to `jobs` threads; rethrows the first
/// failure after all workers stop.
template <class F>
void run_parallel(std::size_t n, unsigned jobs, F task) {
    jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(n)));
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex mu;
    auto worker = [&] {
        for (std::size_t k = next++; k < n; k = next++) {
            try {
                task(k);
            } catch (...) {
                std::lock_guard lock(mu);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    for (unsigned t = 1; t < jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

std::vector<std::vector<double>> metric_rows(const Session& s) {
    std::vector<std::vector<double>> rows;
    for (const auto& r : s.results()) rows.push_back(metric_values(r.metrics));
    return rows;
}

std::filesystem::path output_root(const SessionConfig& cfg) {
    if (cfg.output.dir.empty()) return std::filesystem::absolute("cape_out");
    const std::filesystem::path p(cfg.output.dir);
    return p.is_absolute() || cfg.base_dir.empty() ? p : cfg.base_dir / p;
}

}  // namespace

SessionConfig load_with_overrides(const std::filesystem::path& config_path, const Overrides& o) {
    SessionConfig cfg = load_config(config_path);
    if (o.policy) cfg.policy = policy_from_string(*o.policy);
    if (o.rounds) cfg.rounds = *o.rounds;
    if (o.particles) cfg.particles = *o.particles;
    if (o.out_dir) cfg.output.dir = std::filesystem::absolute(*o.out_dir).string();
    if (o.top_variance) cfg.prior.top_variance = *o.top_variance;
    if (o.seed) cfg.seed = *o.seed;
    if (o.threads) cfg.threads = *o.threads;
    cfg.validate();
    return cfg;
}

std::string aggregate_csv(const std::vector<std::vector<std::vector<double>>>& per_seed, int rounds,
                          const std::string& config_echo) {
    const auto names = metric_names();
    std::string out = "# config=" + config_echo + "\n";
    out += "round";
    for (const auto& n : names) out += "," + n + "_mean," + n + "_std";
    out += "\n";
    for (int t = 0; t < rounds; ++t) {
        out += std::to_string(t + 1);
        for (std::size_t m = 0; m < names.size(); ++m) {
            double sum = 0.0, sq = 0.0;
            std::size_t n = 0;
            for (const auto& seed : per_seed) {
                if (static_cast<std::size_t>(t) >= seed.size()) continue;
                const double v = seed[t][m];
                if (std::isnan(v)) continue;
                sum += v;
                sq += v * v;
                ++n;
            }
            const double mean = n ? sum / static_cast<double>(n) : std::nan("");
            const double var = n > 1 ? std::max(0.0, (sq - n * mean * mean) / static_cast<double>(n - 1)) : 0.0;
            out += "," + format_value(mean) + "," + format_value(n > 1 ? std::sqrt(var) : std::nan(""));
        }
        out += "\n";
    }
    return out;
}

int cmd_simulate(const std::filesystem::path& config_path, int seeds, const Overrides& o, unsigned jobs) {
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");
    const SessionConfig base = load_with_overrides(config_path, o);
    const auto root = output_root(base);
    std::filesystem::create_directories(root);
    std::vector<std::vector<std::vector<double>>> per_seed(static_cast<std::size_t>(seeds));
    run_parallel(per_seed.size(), jobs, [&](std::size_t k) {
        SessionConfig cfg = base;
        cfg.seed = base.seed + k;
        cfg.output.dir = (root / fmt::format("seed_{}", cfg.seed)).string();
        Session session(cfg);
        session.run();
        per_seed[k] = metric_rows(session);
        spdlog::info("seed {} done: {} rounds{}", cfg.seed, session.round(),
                     session.stop_reason().empty() ? "" : " (" + session.stop_reason() + ")");
    });
    SessionConfig echo = base;
    echo.output.dir = root.string();
    write_text_atomic(root / "aggregate.csv", aggregate_csv(per_seed, base.rounds, config_to_json(echo).dump()));
    std::cout << "wrote " << seeds << " run(s) and " << (root / "aggregate.csv").string() << "\n";
    return 0;
}

int cmd_compare(const std::filesystem::path& config_path, const std::vector<std::string>& policies, int seeds,
                const Overrides& o, unsigned jobs) {
    if (policies.size() < 2) throw ConfigError("compare needs at least two policies");
    if (seeds < 1) throw ConfigError("--seeds must be >= 1");
    std::vector<Policy> parsed;
    for (const auto& p : policies) parsed.push_back(policy_from_string(p));
    const SessionConfig base = load_with_overrides(config_path, o);
    const auto root = output_root(base);
    std::filesystem::create_directories(root);

    struct Run {
        std::vector<std::vector<double>> rows;
        std::vector<double> initial;
    };
    std::vector<std::vector<Run>> runs(static_cast<std::size_t>(seeds), std::vector<Run>(parsed.size()));
    run_parallel(runs.size(), jobs, [&](std::size_t k) {
        std::optional<ParticleSet> shared;
        std::uint64_t hash = 0;
        for (std::size_t p = 0; p < parsed.size(); ++p) {
            SessionConfig cfg = base;
            cfg.seed = base.seed + k;
            cfg.policy = parsed[p];
            cfg.output.dir = (root / to_string(parsed[p]) / fmt::format("seed_{}", cfg.seed)).string();
            Session session(cfg, shared);
            if (!shared) {
                shared = session.initial_particles();
                hash = session.initial_hash();
            } else if (session.initial_hash() != hash) {
                throw std::runtime_error(fmt::format("seed {}: initial particle sets differ across policies", cfg.seed));
            }
            session.run();
            runs[k][p] = {metric_rows(session), metric_values(session.initial_metrics())};
        }
        spdlog::info("seed {} compared ({:016x})", base.seed + k, hash);
    });

    SessionConfig echo = base;
    echo.output.dir = root.string();
    std::string out = "# config=" + config_to_json(echo).dump() + "\n";
    out += "policy,seed,round,metric,value\n";
    const auto names = metric_names();
    for (std::size_t p = 0; p < parsed.size(); ++p)
        for (std::size_t k = 0; k < runs.size(); ++k) {
            const auto& r = runs[k][p];
            const std::string prefix = to_string(parsed[p]) + "," + std::to_string(base.seed + k) + ",";
            for (std::size_t m = 0; m < names.size(); ++m)
                out += prefix + "0," + names[m] + "," + format_value(r.initial[m]) + "\n";
            for (std::size_t t = 0; t < r.rows.size(); ++t)
                for (std::size_t m = 0; m < names.size(); ++m)
                    out += prefix + std::to_string(t + 1) + "," + names[m] + "," + format_value(r.rows[t][m]) + "\n";
        }
    write_text_atomic(root / "compare.csv", out);
    std::cout << "wrote " << (root / "compare.csv").string() << "\n";
    return 0;
}

int cmd_prepare_effect_graph(const EffectGraphJob& job) {
    InterventionalData data = read_interventional_csv(job.data_csv);
    if (data.control.rows() == 0) throw ConfigError("no control rows in " + job.data_csv.string());
    for (const auto& t : data.unknown_targets) spdlog::warn("perturbation '{}' names no measured column; ignored", t);
    if (job.top_variance > 0 && job.top_variance < data.names.size()) {
        Eigen::Index rows = data.control.rows();
        for (const auto& g : data.groups) rows += g.samples.rows();
        Eigen::MatrixXd all(rows, data.control.cols());
        Eigen::Index at = 0;
        all.middleRows(at, data.control.rows()) = data.control;
        at += data.control.rows();
        for (const auto& g : data.groups) {
            all.middleRows(at, g.samples.rows()) = g.samples;
            at += g.samples.rows();
        }
        data = select_columns(data, top_variance_columns(all, job.top_variance));
    }
    const EffectGraphReport rep = build_effect_graph(data.control, data.groups, job.options);
    json out = adjacency_to_json(rep.graph, data.names);
    out["summary"] = json{{"edges", rep.edges},
                          {"density", rep.density},
                          {"tests", rep.tests},
                          {"bh_significant", rep.bh_significant},
                          {"used_targets", rep.used_targets},
                          {"dropped_targets", rep.dropped_targets},
                          {"alpha", job.options.alpha},
                          {"min_effect", job.options.min_effect},
                          {"min_group_n", job.options.min_group_n}};
    if (!job.out_json.parent_path().empty()) std::filesystem::create_directories(job.out_json.parent_path());
    write_text_atomic(job.out_json, out.dump(2));

    std::filesystem::path control = job.control_csv;
    if (control.empty()) control = job.out_json.parent_path() / (job.out_json.stem().string() + "_control.csv");
    std::string csv;
    for (std::size_t c = 0; c < data.names.size(); ++c) csv += (c ? "," : "") + data.names[c];
    csv += "\n";
    for (Eigen::Index r = 0; r < data.control.rows(); ++r) {
        for (Eigen::Index c = 0; c < data.control.cols(); ++c) csv += (c ? "," : "") + fmt::format("{}", data.control(r, c));
        csv += "\n";
    }
    write_text_atomic(control, csv);

    const std::size_t k = data.names.size();
    std::cout << fmt::format("K = {}, edges = {}, density = {}/({}*{}) = {:.4f}\n", k, rep.edges, rep.edges, k,
                             k > 0 ? k - 1 : 0, rep.density);
    std::cout << "wrote " << job.out_json.string() << " and " << control.string() << "\n";
    return 0;
}

int cmd_serve(const ServeJob& job) {
    SessionConfig cfg = load_with_overrides(job.config_path, job.overrides);
    if (cfg.output.dir.empty()) cfg.output.dir = output_root(cfg).string();
    std::shared_ptr<Oracle> oracle;
    if (cfg.oracle.kind == "human") {
        // Short waits keep the loop responsive to shutdown; a timed-out
        // round is re-asked unchanged, so the configured timeout is moot here.
        auto channel = std::make_shared<HumanChannel>();
        oracle = std::make_shared<HumanOracle>(channel, std::chrono::milliseconds(200));
    }
    Session session(cfg, {}, oracle);
    ServeOptions opts;
    parse_bind(job.bind, opts);
    if (job.ui) opts.ui_dir = job.ui_dir;
    SessionServer server(session, opts);

    g_interrupted = false;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    const int port = server.start();
    std::cout << "listening on " << opts.host << ":" << port << std::endl;
    while (!g_interrupted.load()) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    spdlog::info("interrupted; writing checkpoint");
    server.stop();
    std::signal(SIGINT, SIG_DFL);
    std::signal(SIGTERM, SIG_DFL);
    return 0;
}

}  // namespace cape::cli
