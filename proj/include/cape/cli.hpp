#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cape/oracle.hpp"
#include "cape/session.hpp"

namespace cape::cli {

/// Command-line overrides applied on top of a loaded config.
struct Overrides {
    std::optional<std::string> policy;
    std::optional<int> rounds;
    std::optional<std::size_t> particles;
    std::optional<std::string> out_dir;
    std::optional<std::size_t> top_variance;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
};

SessionConfig load_with_overrides(const std::filesystem::path& config_path, const Overrides& o);

/// Per-seed artifacts under <out>/seed_<seed>/ plus <out>/aggregate.csv.
/// Seeds run as base_seed, base_seed + 1, ...; `jobs` sessions run at once.
int cmd_simulate(const std::filesystem::path& config_path, int seeds, const Overrides& o, unsigned jobs = 1);

/// Matched-seed runs for every policy: the initial particle set is built once
/// per seed and shared. Writes <out>/compare.csv in long format
/// (policy, seed, round, metric, value), round 0 being the shared prior.
int cmd_compare(const std::filesystem::path& config_path, const std::vector<std::string>& policies, int seeds,
                const Overrides& o, unsigned jobs = 1);

struct EffectGraphJob {
    std::filesystem::path data_csv;
    std::filesystem::path out_json;
    EffectGraphOptions options;
    std::size_t top_variance = 0;
    /// Control rows on the selected columns, for the bootstrap prior. Empty
    /// means "<out_json stem>_control.csv" next to the graph.
    std::filesystem::path control_csv;
};

int cmd_prepare_effect_graph(const EffectGraphJob& job);

struct ServeJob {
    std::filesystem::path config_path;
    Overrides overrides;
    std::string bind = "127.0.0.1:8080";
    bool ui = true;
    std::filesystem::path ui_dir;
};

/// Blocks until SIGINT/SIGTERM or the session ends, checkpoints, returns 0.
int cmd_serve(const ServeJob& job);

/// Mean and sample standard deviation across seeds, NaNs skipped; the
/// standard deviation is NaN with fewer than two values.
std::string aggregate_csv(const std::vector<std::vector<std::vector<double>>>& per_seed, int rounds,
                          const std::string& config_echo);

}  // namespace cape::cli
