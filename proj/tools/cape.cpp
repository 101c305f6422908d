#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <spdlog/spdlog.h>

#include "CLI11.hpp"

#include "cape/cli.hpp"
#include "cape/errors.hpp"

namespace {

void configure_logging() {
    spdlog::set_level(spdlog::level::warn);
    const char* env = std::getenv("CAPE_LOG_LEVEL");
    if (!env) return;
    const std::string level(env);
    if (level == "error") spdlog::set_level(spdlog::level::err);
    else if (level == "warn") spdlog::set_level(spdlog::level::warn);
    else if (level == "info") spdlog::set_level(spdlog::level::info);
    else if (level == "debug") spdlog::set_level(spdlog::level::debug);
    else spdlog::warn("ignoring CAPE_LOG_LEVEL={}; expected error, warn, info or debug", level);
}

void add_overrides(CLI::App* cmd, cape::cli::Overrides& o) {
    cmd->add_option("--policy", o.policy, "Acquisition policy: EIG, UNC, RND or STE");
    cmd->add_option("--rounds", o.rounds, "Number of query rounds T");
    cmd->add_option("--particles", o.particles, "Number of particles S");
    cmd->add_option("--out-dir", o.out_dir, "Output directory");
    cmd->add_option("--top-variance", o.top_variance, "Keep the K highest-variance data columns");
    cmd->add_option("--seed", o.seed, "Base seed");
    cmd->add_option("--threads", o.threads, "Worker threads inside one session");
}

}  // namespace

int main(int argc, char** argv) {
    configure_logging();
    CLI::App app{"cape: causal structure elicitation with particle posteriors"};
    app.require_subcommand(1);

    std::string config;
    int seeds = 1;
    unsigned jobs = 1;
    cape::cli::Overrides overrides;

    auto* simulate = app.add_subcommand("simulate", "Run headless sessions for one or more seeds");
    simulate->add_option("--config", config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
    simulate->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
    simulate->add_option("--jobs", jobs, "Sessions run concurrently")->check(CLI::PositiveNumber);
    add_overrides(simulate, overrides);

    std::vector<std::string> policies{"EIG", "RND"};
    auto* compare = app.add_subcommand("compare", "Matched-seed comparison of policies");
    compare->add_option("--config", config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
    compare->add_option("--policies", policies, "Policies to compare")->delimiter(',');
    compare->add_option("--seeds", seeds, "Number of seeds")->check(CLI::PositiveNumber);
    compare->add_option("--jobs", jobs, "Seeds run concurrently")->check(CLI::PositiveNumber);
    add_overrides(compare, overrides);

    cape::cli::EffectGraphJob eg;
    std::string data_csv, out_json, control_csv;
    auto* prep = app.add_subcommand("prepare-effect-graph", "Build a binary effect graph from interventional data");
    prep->add_option("--data", data_csv, "CSV with a 'perturbation' column")->required()->check(CLI::ExistingFile);
    prep->add_option("--out", out_json, "Effect graph JSON to write")->required();
    prep->add_option("--control-out", control_csv, "Control-row CSV to write");
    prep->add_option("--alpha", eg.options.alpha, "BH false discovery rate");
    prep->add_option("--min-effect", eg.options.min_effect, "Minimum absolute mean shift");
    prep->add_option("--min-group-n", eg.options.min_group_n, "Minimum cells per perturbation");
    prep->add_option("--top-variance", eg.top_variance, "Keep the K highest-variance genes");

    cape::cli::ServeJob serve;
    std::string ui_dir;
    bool no_ui = false;
    auto* srv = app.add_subcommand("serve", "Serve an interactive session over HTTP");
    srv->add_option("--config", config, "Session config (JSON)")->required()->check(CLI::ExistingFile);
    srv->add_option("--bind", serve.bind, "host:port to listen on");
    srv->add_option("--ui-dir", ui_dir, "Built UI assets");
    srv->add_flag("--no-ui", no_ui, "Serve the API only");
    add_overrides(srv, overrides);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*simulate) return cape::cli::cmd_simulate(config, seeds, overrides, jobs);
        if (*compare) return cape::cli::cmd_compare(config, policies, seeds, overrides, jobs);
        if (*prep) {
            eg.data_csv = data_csv;
            eg.out_json = out_json;
            eg.control_csv = control_csv;
            return cape::cli::cmd_prepare_effect_graph(eg);
        }
        serve.config_path = config;
        serve.overrides = overrides;
        serve.ui = !no_ui;
        serve.ui_dir = ui_dir.empty() ? std::string("ui/dist") : ui_dir;
        return cape::cli::cmd_serve(serve);
    } catch (const cape::ConfigError& ex) {
        std::cerr << "config error: " << ex.what() << "\n";
        return 2;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return 1;
    }
}
