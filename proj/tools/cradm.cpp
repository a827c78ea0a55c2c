// Command-line front end.  Exit codes: 0 ok, 1 config error, 2 capacity or
// convergence error.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "cradm/experiment.hpp"

namespace fs = std::filesystem;

namespace {

struct Options {
    std::string config;
    std::string preset;
    std::optional<std::uint64_t> seed;
    std::string out;
    int jobs = 1;
};

cradm::ExperimentConfig load(const Options& o) {
    if (o.config.empty() == o.preset.empty()) throw cradm::ConfigError("give exactly one of --config or --preset");
    auto cfg = o.config.empty() ? cradm::preset_config(o.preset) : cradm::load_config(o.config);
    if (o.seed) cfg.seeds = {*o.seed};
    if (!o.out.empty()) cfg.output_dir = o.out;
    if (o.jobs < 1) throw cradm::ConfigError("--jobs must be >= 1");
    return cfg;
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary);
    if (!os) throw cradm::ConfigError(fmt::format("cannot write '{}'", path.string()));
    os << text;
    std::cout << "wrote " << path.string() << "\n";
}

int run(const std::string& verb, const Options& o) {
    const auto cfg = load(o);
    const fs::path dir(cfg.output_dir);
    if (verb == "simulate") {
        write_file(dir / (cfg.id + "_simulate.csv"), cradm::simulation_csv(cradm::run_simulations(cfg, o.jobs)));
    } else if (verb == "experiment") {
        const auto res = cradm::run_experiment(cfg, o.jobs);
        write_file(dir / (cfg.id + ".csv"), res.csv);
        write_file(dir / (cfg.id + ".json"), res.json);
        if (!res.curve_csv.empty()) write_file(dir / (cfg.id + "_rollout_eval.csv"), res.curve_csv);
    } else if (verb == "solve") {
        for (const auto& s : cradm::solve_command(cfg)) {
            fmt::print("J={} states={} A_star={} iterations={}\n", s.channels, s.states, s.result.A_star,
                       s.result.iterations);
            write_file(dir / fmt::format("{}_solve_J{}.json", cfg.id, s.channels), s.json);
        }
    } else if (verb == "rollout-eval") {
        write_file(dir / (cfg.id + "_rollout_eval.csv"), cradm::run_curves(cfg, o.jobs));
    } else if (verb == "boundary") {
        const auto rows = cradm::run_boundaries(cfg, o.jobs);
        for (const auto& r : rows)
            fmt::print("J={} G_bound={} std_err={} argmax_m={} argmax_N={}\n", r.params.channels, r.result.G_bound,
                       r.result.std_err, r.result.argmax_m, r.result.argmax_N);
        write_file(dir / (cfg.id + "_boundary.csv"), cradm::boundary_csv(rows));
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Admission control and scheduling over ON/OFF channels"};
    app.require_subcommand(1);
    Options o;
    std::string verb;
    const std::pair<const char*, const char*> verbs[] = {
        {"simulate", "simulate every policy of the config"},
        {"solve", "solve the finite model exactly at every J"},
        {"rollout-eval", "estimate segment revenue over the target range"},
        {"boundary", "estimate the revenue boundary"},
        {"experiment", "run simulations, boundary and curves as configured"},
    };
    for (const auto& [name, help] : verbs) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", o.config, "INI or JSON config file");
        sub->add_option("--preset", o.preset, "built-in config: " + fmt::format("{}", fmt::join(cradm::preset_names(), ", ")));
        sub->add_option("--seed", o.seed, "override the seed list with one seed");
        sub->add_option("--out", o.out, "output directory");
        sub->add_option("--jobs", o.jobs, "worker threads");
        sub->callback([&verb, n = std::string(name)] { verb = n; });
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }
    try {
        return run(verb, o);
    } catch (const cradm::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 1;
    } catch (const cradm::CapacityError& e) {
        std::cerr << "capacity error: " << e.what() << "\n";
        return 2;
    } catch (const cradm::ConvergenceError& e) {
        std::cerr << "convergence error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
