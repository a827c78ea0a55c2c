#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cradm/experiment.hpp"
#include "oracles.hpp"

using namespace cradm;

namespace {

const char* small_ini = R"(
[experiment]
id = small

[model]
max_delay = 1
p_stay_on = 0.6
q_stay_off = 0.7
p_finish = 0.4
reward_completion = 5
reward_per_slot = 0.5
penalty_drop = 3  ; inline comments are not stripped by the reader, so keep them on their own line

[policies]
list = threshold-ldf, greedy

[sweep]
channels = 1:2
thresholds = 1, 2

[simulation]
warmup = 100
batch_length = 200
batches = 10
seeds = 3:4
)";

const char* small_json = R"({
  "experiment": {"id": "small"},
  "model": {"max_delay": 1, "p_stay_on": 0.6, "q_stay_off": 0.7, "p_finish": 0.4,
            "reward_completion": 5, "reward_per_slot": 0.5, "penalty_drop": 3},
  "policies": {"list": ["threshold-ldf", "greedy"]},
  "sweep": {"channels": "1:2", "thresholds": [1, 2]},
  "simulation": {"warmup": 100, "batch_length": 200, "batches": 10, "seeds": "3:4"}
})";

std::string ini_without_inline_comment() {
    std::string s = small_ini;
    const auto at = s.find("  ; inline");
    return s.erase(at, s.find('\n', at) - at);
}

std::string error_of(const std::string& text, ConfigFormat format = ConfigFormat::Ini) {
    try {
        parse_config(text, format, "cfg");
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

ExperimentConfig shrink(ExperimentConfig cfg) {
    cfg.simulation = {100, 100, 10};
    cfg.pilot = {50, 50, 10};
    return cfg;
}

int run_cli(const std::string& args) {
    const int status = std::system((std::string(CRADM_CLI) + " " + args + " > /dev/null 2>&1").c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

} // namespace

TEST(Config, IniAndJsonAgree) {
    const auto a = parse_config(ini_without_inline_comment(), ConfigFormat::Ini);
    const auto b = parse_config(small_json, ConfigFormat::Json);
    EXPECT_EQ(a.id, "small");
    EXPECT_EQ(a.channels, (std::vector<int>{1, 2}));
    EXPECT_EQ(a.thresholds, (std::vector<int>{1, 2}));
    EXPECT_EQ(a.seeds, (std::vector<std::uint64_t>{3, 4}));
    EXPECT_EQ(a.channels, b.channels);
    EXPECT_EQ(a.thresholds, b.thresholds);
    EXPECT_EQ(a.seeds, b.seeds);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.policies.size(), 2u);
    EXPECT_EQ(a.policies[0].name(), "threshold-ldf");
    EXPECT_EQ(b.policies[1].name(), "greedy");
    EXPECT_EQ(simulation_csv(run_simulations(a)), simulation_csv(run_simulations(b)));
}

TEST(Config, ValuesWithTrailingTextAreRejected) {
    EXPECT_NE(error_of(small_ini).find("model.penalty_drop"), std::string::npos);
}

TEST(Config, ErrorsCarryTheLine) {
    EXPECT_EQ(error_of("[model]\nchannels = 2\n[sweep\n").rfind("cfg:3:", 0), 0u);
    EXPECT_EQ(error_of("{\n\"model\": {\n\"channels\": 2,,\n}}", ConfigFormat::Json).rfind("cfg:3:", 0), 0u);
}

TEST(Config, RejectsUnknownNamesAndBadValues) {
    EXPECT_NE(error_of("[modle]\nchannels = 2\n").find("unknown section [modle]"), std::string::npos);
    EXPECT_NE(error_of("[model]\nchanels = 2\n").find("unknown key model.chanels"), std::string::npos);
    EXPECT_NE(error_of("[policies]\nlist = greedy, fastest\n").find("fastest"), std::string::npos);
    EXPECT_NE(error_of("[model]\np_stay_on = 1.5\n").find("probabilities"), std::string::npos);
    EXPECT_NE(error_of("[model]\nchannels = two\n").find("model.channels"), std::string::npos);
    EXPECT_NE(error_of("[simulation]\nbatches = 5\n").find("batches"), std::string::npos);
}

TEST(Config, EmptySweepIsAnError) {
    EXPECT_NE(error_of("[sweep]\nchannels = 5:3\n").find("empty range"), std::string::npos);
    EXPECT_NE(error_of("[sweep]\nchannels = ,\n").find("sweep.channels is empty"), std::string::npos);
    EXPECT_NE(error_of("[policies]\nlist = threshold\n[sweep]\nthresholds = ,\n").find("thresholds is empty"),
              std::string::npos);
    EXPECT_NE(error_of("[model]\nmax_delay = 1\n[policies]\nlist = threshold\n[sweep]\nthresholds = 3\n").find("N_cap=2"),
              std::string::npos);
}

TEST(Config, AutoThresholdsFollowTheCap) {
    auto cfg = parse_config("[model]\nmax_delay = 2\n[sweep]\nchannels = 2:3\n", ConfigFormat::Ini);
    EXPECT_TRUE(cfg.auto_thresholds);
    EXPECT_EQ(cfg.params_for(3).population_cap, 9);
    EXPECT_EQ(cfg.thresholds_for(cfg.params_for(2)).size(), 6u);
    cfg = parse_config("[model]\npopulation_cap = 4\n[sweep]\nchannels = 3\n", ConfigFormat::Ini);
    EXPECT_EQ(cfg.params_for(3).population_cap, 4);
}

TEST(Config, PolicyNames) {
    EXPECT_EQ(parse_policy_spec("threshold")->name(), "threshold-ldf");
    EXPECT_EQ(parse_policy_spec("threshold-random")->allocator, Allocator::Random);
    EXPECT_EQ(parse_policy_spec("heuristic-best-sdf")->name(), "heuristic-best-sdf");
    EXPECT_FALSE(parse_policy_spec("threshold-lifo"));
    EXPECT_FALSE(parse_policy_spec("Greedy"));
}

TEST(Config, LoadsFilesByExtension) {
    const auto dir = std::filesystem::temp_directory_path() / "cradm_test_config";
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "a.json") << small_json;
    std::ofstream(dir / "a.ini") << ini_without_inline_comment();
    EXPECT_EQ(load_config((dir / "a.json").string()).params, load_config((dir / "a.ini").string()).params);
    EXPECT_THROW(load_config((dir / "missing.ini").string()), ConfigError);
}

TEST(Presets, AllParse) {
    for (const auto& name : preset_names()) EXPECT_EQ(preset_config(name).id, name);
    EXPECT_THROW(preset_config("fig9"), ConfigError);
}

TEST(Presets, Fig5SweepsEveryThresholdForEachAllocator) {
    const auto cfg = shrink(preset_config("fig5"));
    EXPECT_EQ(cfg.params_for(5).population_cap, 30);
    EXPECT_EQ(cfg.simulation.total_slots() > 0, true);
    const auto full = preset_config("fig5");
    EXPECT_GE(full.simulation.batch_length * full.simulation.batches, 990'000);
    const auto rows = run_simulations(cfg);
    ASSERT_EQ(rows.size(), 3u * 30u * cfg.seeds.size());
    EXPECT_EQ(rows.front().policy, "threshold-ldf");
    EXPECT_EQ(*rows.front().threshold, 1);
    EXPECT_EQ(rows.back().policy, "threshold-random");
    EXPECT_EQ(*rows.back().threshold, 30);
}

TEST(Presets, Fig8RunsEveryPolicyAtEveryJ) {
    const auto cfg = preset_config("fig8");
    EXPECT_EQ(cfg.channels, (std::vector<int>{5, 6, 7, 8, 9, 10}));
    ASSERT_EQ(cfg.policies.size(), 3u);
    EXPECT_TRUE(cfg.boundary.enabled);
    ASSERT_TRUE(cfg.rollout_simulation.has_value());
}

TEST(Output, CsvHeaderIsFixed) {
    EXPECT_STREQ(simulation_csv_header,
                 "config_id,policy,threshold,J,p_stay_on,q_stay_off,D_max,P_f,R_c,R_t,C_q,seed,slots,avg_revenue,ci95,"
                 "completions,drops");
    const auto cfg = parse_config(ini_without_inline_comment(), ConfigFormat::Ini);
    const auto rows = run_simulations(cfg);
    ASSERT_EQ(rows.size(), 2u * (2 * 2 + 2));
    std::istringstream csv(simulation_csv(rows));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, simulation_csv_header);
    int n = 0;
    while (std::getline(csv, line)) {
        EXPECT_EQ(std::count(line.begin(), line.end(), ','), 16) << line;
        ++n;
    }
    EXPECT_EQ(n, 12);
}

TEST(Run, DeterministicAndIndependentOfJobs) {
    auto cfg = shrink(preset_config("tiny"));
    cfg.seeds = {1, 2};
    cfg.boundary.search.n_runs = 200;
    const auto a = run_experiment(cfg, 1);
    const auto b = run_experiment(cfg, 4);
    EXPECT_EQ(a.csv, b.csv);
    EXPECT_EQ(a.json, b.json);
    cfg.seeds = {3, 2};
    EXPECT_NE(run_experiment(cfg, 1).csv, a.csv);
}

TEST(Run, OptimalRowUsesTheEnumeratedOptimum) {
    const auto cfg = preset_config("tiny");
    const auto solved = solve_command(cfg);
    ASSERT_EQ(solved.size(), 1u);
    const auto model = build_explicit_model(cfg.params_for(1));
    const auto best = oracle::enumerate_policies(model);
    EXPECT_NEAR(solved[0].result.A_star, best.gain, 1e-6);
    EXPECT_EQ(nlohmann::json::parse(solved[0].json)["num_states"], model.num_states());

    auto quick = cfg;
    quick.policies = {*parse_policy_spec("optimal")};
    const auto rows = run_simulations(quick);
    ASSERT_EQ(rows.size(), 1u);
    EXPECT_NEAR(rows[0].report.avg_revenue, best.gain, rows[0].report.ci_halfwidth_95 * 1.5);
}

TEST(Run, HeuristicBestReportsThePilotArgmax) {
    auto cfg = shrink(preset_config("fig5"));
    cfg.channels = {2};
    cfg.policies = {*parse_policy_spec("heuristic-best")};
    const auto rows = run_simulations(cfg);
    ASSERT_EQ(rows.size(), 1u);
    const auto p = cfg.params_for(2);
    const auto pilot_seed = RandomStream(cfg.seeds[0]).derive(stream_tag::pilot).key();
    double best = -1e300;
    int arg = 0;
    for (int t : cfg.thresholds_for(p)) {
        const double r =
            run_simulation(ThresholdPolicy(t), p, SystemState::empty(p), cfg.pilot, pilot_seed).avg_revenue;
        if (r > best) best = r, arg = t;
    }
    EXPECT_EQ(*rows[0].threshold, arg);
}

TEST(Run, CurvesCoverTheTargetRange) {
    auto cfg = preset_config("fig7");
    cfg.curve->n_runs = 50;
    std::istringstream csv(run_curves(cfg));
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, curve_csv_header);
    int n = 0;
    while (std::getline(csv, line)) ++n;
    EXPECT_EQ(n, 2 * 11); // two reward pairs, N = 0 .. 10
}

TEST(Cli, ExitCodes) {
    const auto dir = std::filesystem::temp_directory_path() / "cradm_test_cli";
    std::filesystem::create_directories(dir);
    const auto write = [&](const char* name, const char* text) {
        std::ofstream(dir / name) << text;
        return (dir / name).string();
    };
    const auto out = " --out " + (dir / "out").string();
    EXPECT_EQ(run_cli("solve --preset tiny" + out), 0);
    EXPECT_TRUE(std::filesystem::exists(dir / "out" / "tiny_solve_J1.json"));
    EXPECT_EQ(run_cli("solve --config " + write("big.ini", "[model]\nchannels = 20\nmax_delay = 5\n") + out), 2);
    EXPECT_EQ(run_cli("simulate --config " + write("bad.ini", "[model]\nchannels = 0\n") + out), 1);
    EXPECT_EQ(run_cli("simulate --preset nope" + out), 1);
    EXPECT_EQ(run_cli("simulate" + out), 1);
    EXPECT_EQ(run_cli("explode --preset tiny"), 1);
    EXPECT_EQ(run_cli("solve --preset tiny --config x.ini"), 1);
}

TEST(Cli, SeedOverrideIsReproducible) {
    const auto dir = std::filesystem::temp_directory_path() / "cradm_test_seed";
    const auto ini = (dir / "q.ini").string();
    std::filesystem::create_directories(dir);
    std::ofstream(ini) << ini_without_inline_comment();
    auto read = [](const std::filesystem::path& p) {
        std::ifstream in(p);
        std::stringstream s;
        s << in.rdbuf();
        return s.str();
    };
    ASSERT_EQ(run_cli("simulate --config " + ini + " --seed 9 --out " + (dir / "a").string()), 0);
    ASSERT_EQ(run_cli("simulate --config " + ini + " --seed 9 --jobs 2 --out " + (dir / "b").string()), 0);
    const auto a = read(dir / "a" / "small_simulate.csv");
    EXPECT_EQ(a, read(dir / "b" / "small_simulate.csv"));
    EXPECT_NE(a.find(",9,"), std::string::npos);
    auto cfg = parse_config(ini_without_inline_comment(), ConfigFormat::Ini);
    cfg.seeds = {9};
    EXPECT_EQ(a, simulation_csv(run_simulations(cfg)));
}
