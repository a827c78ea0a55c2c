#pragma once

// Experiment configuration, built-in presets and the sweep runner used by the
// command-line tool.  Everything the tool does is reachable from here; the
// tool only parses flags and writes the returned text to files.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <exception>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/algorithm/string/split.hpp>
#include <boost/algorithm/string/trim.hpp>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cradm/bounds.hpp"
#include "cradm/policies.hpp"
#include "cradm/rollout.hpp"
#include "cradm/simulation.hpp"
#include "cradm/solver.hpp"
#include "cradm/state_space.hpp"

namespace cradm {

// ---------------------------------------------------------------------------
// Configuration

struct PolicySpec {
    enum class Kind { Threshold, HeuristicBest, Greedy, Rollout, Optimal, Null };
    Kind kind = Kind::Threshold;
    Allocator allocator = Allocator::LargestDelayFirst;

    bool uses_thresholds() const { return kind == Kind::Threshold || kind == Kind::HeuristicBest; }

    std::string name() const {
        switch (kind) {
        case Kind::Threshold: return "threshold-" + to_string(allocator);
        case Kind::HeuristicBest: return "heuristic-best-" + to_string(allocator);
        case Kind::Greedy: return "greedy";
        case Kind::Rollout: return "rollout";
        case Kind::Optimal: return "optimal";
        case Kind::Null: return "null";
        }
        return "?";
    }
};

/// Accepts threshold[-ldf|-sdf|-random], heuristic-best[-ldf|-sdf|-random],
/// greedy, rollout, optimal and null.
inline std::optional<PolicySpec> parse_policy_spec(const std::string& text) {
    auto with_allocator = [](PolicySpec::Kind kind, const std::string& rest) -> std::optional<PolicySpec> {
        PolicySpec spec{kind, Allocator::LargestDelayFirst};
        if (rest.empty() || rest == "-ldf") return spec;
        if (rest == "-sdf") spec.allocator = Allocator::SmallestDelayFirst;
        else if (rest == "-random") spec.allocator = Allocator::Random;
        else return std::nullopt;
        return spec;
    };
    for (const auto& [prefix, kind] : {std::pair{std::string("threshold"), PolicySpec::Kind::Threshold},
                                       std::pair{std::string("heuristic-best"), PolicySpec::Kind::HeuristicBest}})
        if (text.rfind(prefix, 0) == 0) return with_allocator(kind, text.substr(prefix.size()));
    if (text == "greedy") return PolicySpec{PolicySpec::Kind::Greedy};
    if (text == "rollout") return PolicySpec{PolicySpec::Kind::Rollout};
    if (text == "optimal") return PolicySpec{PolicySpec::Kind::Optimal};
    if (text == "null") return PolicySpec{PolicySpec::Kind::Null};
    return std::nullopt;
}

struct RewardPair {
    double reward_completion = 0.0;
    double penalty_drop = 0.0;
};

/// G~(N, theta) curves from an empty user state.
struct CurveSettings {
    std::vector<RewardPair> rewards; // empty: the model's R_c and C_q
    std::optional<int> available;    // m of theta, default J
    std::vector<int> targets;        // empty: 0 .. min(N_cap, J)
    int n_runs = 10'000;
};

struct BoundarySettings {
    bool enabled = false;
    SearchOptions search;
};

struct ExperimentConfig {
    std::string id = "custom";
    SystemParams params;             // `channels` is replaced by each sweep value
    bool auto_population_cap = true; // N_cap = J (D_max + 1)
    std::vector<PolicySpec> policies;
    std::vector<int> channels;       // J sweep
    std::vector<int> thresholds;     // threshold sweep
    bool auto_thresholds = false;    // 1 .. N_cap at every J
    SimulationControls simulation;
    SimulationControls pilot{2'000, 2'000, 10};
    std::optional<SimulationControls> rollout_simulation;
    std::vector<std::uint64_t> seeds{1};
    SearchOptions rollout;
    SolveOptions solver;
    double state_limit = default_state_limit;
    BoundarySettings boundary;
    std::optional<CurveSettings> curve;
    std::string output_dir = "results";

    SystemParams params_for(int J) const {
        SystemParams p = params;
        p.channels = J;
        if (auto_population_cap) p.population_cap = default_population_cap(J, p.max_delay);
        return p;
    }

    std::vector<int> thresholds_for(const SystemParams& p) const {
        if (!auto_thresholds) return thresholds;
        std::vector<int> out;
        for (int t = 1; t <= p.population_cap; ++t) out.push_back(t);
        return out;
    }

    /// Throws ConfigError on anything that would make a run meaningless.
    void validate() const {
        if (channels.empty()) throw ConfigError("sweep.channels is empty");
        if (seeds.empty()) throw ConfigError("simulation.seeds is empty");
        for (int J : channels) {
            const SystemParams p = params_for(J);
            try {
                p.validate();
            } catch (const DomainError& e) {
                throw ConfigError(fmt::format("model at J={}: {}", J, e.what()));
            }
            if (std::any_of(policies.begin(), policies.end(), [](const PolicySpec& s) { return s.uses_thresholds(); })) {
                const auto ts = thresholds_for(p);
                if (ts.empty()) throw ConfigError("sweep.thresholds is empty");
                for (int t : ts)
                    if (t < 0 || t > p.population_cap)
                        throw ConfigError(
                            fmt::format("sweep.thresholds: {} lies outside [0, N_cap={}] at J={}", t, p.population_cap, J));
            }
        }
        auto check_window = [](const SimulationControls& c, const char* where) {
            if (c.batches < 10) throw ConfigError(fmt::format("{}.batches must be >= 10", where));
            if (c.batch_length < 1 || c.warmup < 0) throw ConfigError(fmt::format("{}: invalid window", where));
        };
        check_window(simulation, "simulation");
        check_window(pilot, "pilot");
        if (rollout_simulation) check_window(*rollout_simulation, "rollout");
        for (const auto* s : {&rollout, &boundary.search})
            if (s->n_runs < 1 || s->max_runs < s->n_runs || s->guard < 0 || s->max_segment_slots < 1)
                throw ConfigError("rollout/boundary: need 1 <= n_runs <= max_runs, guard >= 0, max_segment_slots >= 1");
        if (solver.tol <= 0 || solver.max_iter < 1 || !(solver.aperiodicity > 0 && solver.aperiodicity <= 1))
            throw ConfigError("solver: need tol > 0, max_iter >= 1 and aperiodicity in (0, 1]");
        if (curve && curve->n_runs < 1) throw ConfigError("rollout_eval.n_runs must be >= 1");
        if (curve && curve->available)
            for (int J : channels)
                if (*curve->available < 0 || *curve->available > J)
                    throw ConfigError(fmt::format("rollout_eval.m = {} lies outside [0, J={}]", *curve->available, J));
    }
};

namespace config_detail {

using boost::property_tree::ptree;

inline std::string trimmed(std::string s) {
    boost::algorithm::trim(s);
    return s;
}

inline std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> parts;
    boost::algorithm::split(parts, text, [](char c) { return c == ','; });
    std::vector<std::string> out;
    for (auto& p : parts)
        if (auto t = trimmed(p); !t.empty()) out.push_back(t);
    return out;
}

template <typename T>
T parse_number(const std::string& field, const std::string& raw) {
    const std::string text = trimmed(raw);
    T value{};
    const auto* end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc() || ptr != end || text.empty())
        throw ConfigError(fmt::format("{}: cannot read '{}' as a number", field, text));
    return value;
}

inline bool parse_bool(const std::string& field, const std::string& raw) {
    const std::string t = trimmed(raw);
    if (t == "true" || t == "yes" || t == "on" || t == "1") return true;
    if (t == "false" || t == "no" || t == "off" || t == "0") return false;
    throw ConfigError(fmt::format("{}: expected true or false, got '{}'", field, t));
}

/// "1:5, 8, 10:12" -> 1 2 3 4 5 8 10 11 12 (ranges inclusive).
template <typename T>
std::vector<T> parse_range_list(const std::string& field, const std::string& text) {
    std::vector<T> out;
    for (const auto& item : split_list(text)) {
        const auto colon = item.find(':');
        if (colon == std::string::npos) {
            out.push_back(parse_number<T>(field, item));
            continue;
        }
        const T lo = parse_number<T>(field, item.substr(0, colon));
        const T hi = parse_number<T>(field, item.substr(colon + 1));
        if (hi < lo) throw ConfigError(fmt::format("{}: empty range '{}'", field, item));
        for (T v = lo; v <= hi; ++v) out.push_back(v);
    }
    return out;
}

inline const std::map<std::string, std::set<std::string>>& schema() {
    static const std::map<std::string, std::set<std::string>> s{
        {"experiment", {"id"}},
        {"model",
         {"channels", "p_stay_on", "q_stay_off", "max_delay", "p_finish", "reward_completion", "reward_per_slot",
          "penalty_drop", "population_cap"}},
        {"policies", {"list"}},
        {"sweep", {"channels", "thresholds"}},
        {"simulation", {"warmup", "batch_length", "batches", "seeds"}},
        {"pilot", {"warmup", "batch_length", "batches"}},
        {"rollout",
         {"n_runs", "max_runs", "guard", "max_segment_slots", "sim_warmup", "sim_batch_length", "sim_batches"}},
        {"solver", {"tol", "max_iter", "state_limit", "aperiodicity"}},
        {"boundary", {"enabled", "n_runs", "max_runs", "guard"}},
        {"rollout_eval", {"rewards", "m", "targets", "n_runs"}},
        {"output", {"dir"}},
    };
    return s;
}

inline ExperimentConfig from_tree(const ptree& tree) {
    const auto& known = schema();
    for (const auto& [section, body] : tree) {
        const auto it = known.find(section);
        if (it == known.end()) throw ConfigError(fmt::format("unknown section [{}]", section));
        for (const auto& [key, value] : body) {
            if (!it->second.count(key)) throw ConfigError(fmt::format("unknown key {}.{}", section, key));
            if (!value.empty()) throw ConfigError(fmt::format("{}.{}: nested values are not supported", section, key));
        }
    }
    auto get = [&](const std::string& path) -> std::optional<std::string> {
        if (auto v = tree.get_optional<std::string>(ptree::path_type(path, '.'))) return trimmed(*v);
        return std::nullopt;
    };
    auto num = [&](const std::string& path, auto& target) {
        if (auto v = get(path)) target = parse_number<std::remove_reference_t<decltype(target)>>(path, *v);
    };

    ExperimentConfig cfg;
    if (auto v = get("experiment.id")) cfg.id = *v;

    auto& p = cfg.params;
    num("model.channels", p.channels);
    num("model.p_stay_on", p.p_stay_on);
    num("model.q_stay_off", p.q_stay_off);
    num("model.max_delay", p.max_delay);
    num("model.p_finish", p.p_finish);
    num("model.reward_completion", p.reward_completion);
    num("model.reward_per_slot", p.reward_per_slot);
    num("model.penalty_drop", p.penalty_drop);
    if (auto v = get("model.population_cap"); v && *v != "auto") {
        cfg.auto_population_cap = false;
        p.population_cap = parse_number<int>("model.population_cap", *v);
    }

    if (auto v = get("policies.list"))
        for (const auto& name : split_list(*v)) {
            auto spec = parse_policy_spec(name);
            if (!spec) throw ConfigError(fmt::format("policies.list: unknown policy '{}'", name));
            cfg.policies.push_back(*spec);
        }

    if (auto v = get("sweep.channels")) cfg.channels = parse_range_list<int>("sweep.channels", *v);
    else cfg.channels = {p.channels};
    if (auto v = get("sweep.thresholds")) {
        if (*v == "auto") cfg.auto_thresholds = true;
        else cfg.thresholds = parse_range_list<int>("sweep.thresholds", *v);
    } else {
        cfg.auto_thresholds = true;
    }

    num("simulation.warmup", cfg.simulation.warmup);
    num("simulation.batch_length", cfg.simulation.batch_length);
    num("simulation.batches", cfg.simulation.batches);
    if (auto v = get("simulation.seeds")) cfg.seeds = parse_range_list<std::uint64_t>("simulation.seeds", *v);
    num("pilot.warmup", cfg.pilot.warmup);
    num("pilot.batch_length", cfg.pilot.batch_length);
    num("pilot.batches", cfg.pilot.batches);

    num("rollout.n_runs", cfg.rollout.n_runs);
    num("rollout.max_runs", cfg.rollout.max_runs);
    num("rollout.guard", cfg.rollout.guard);
    num("rollout.max_segment_slots", cfg.rollout.max_segment_slots);
    if (get("rollout.sim_warmup") || get("rollout.sim_batch_length") || get("rollout.sim_batches")) {
        SimulationControls c = cfg.simulation;
        num("rollout.sim_warmup", c.warmup);
        num("rollout.sim_batch_length", c.batch_length);
        num("rollout.sim_batches", c.batches);
        cfg.rollout_simulation = c;
    }

    num("solver.tol", cfg.solver.tol);
    num("solver.max_iter", cfg.solver.max_iter);
    num("solver.state_limit", cfg.state_limit);
    num("solver.aperiodicity", cfg.solver.aperiodicity);

    if (auto v = get("boundary.enabled")) cfg.boundary.enabled = parse_bool("boundary.enabled", *v);
    cfg.boundary.search.max_segment_slots = cfg.rollout.max_segment_slots;
    num("boundary.n_runs", cfg.boundary.search.n_runs);
    num("boundary.max_runs", cfg.boundary.search.max_runs);
    num("boundary.guard", cfg.boundary.search.guard);

    if (tree.get_child_optional("rollout_eval")) {
        CurveSettings c;
        if (auto v = get("rollout_eval.rewards"))
            for (const auto& item : split_list(*v)) {
                const auto slash = item.find('/');
                if (slash == std::string::npos)
                    throw ConfigError(fmt::format("rollout_eval.rewards: expected R_c/C_q pairs, got '{}'", item));
                c.rewards.push_back({parse_number<double>("rollout_eval.rewards", item.substr(0, slash)),
                                     parse_number<double>("rollout_eval.rewards", item.substr(slash + 1))});
            }
        if (auto v = get("rollout_eval.m"); v && *v != "auto") c.available = parse_number<int>("rollout_eval.m", *v);
        if (auto v = get("rollout_eval.targets"); v && *v != "auto")
            c.targets = parse_range_list<int>("rollout_eval.targets", *v);
        num("rollout_eval.n_runs", c.n_runs);
        cfg.curve = c;
    }

    if (auto v = get("output.dir")) cfg.output_dir = *v;
    cfg.validate();
    return cfg;
}

inline std::size_t line_of_offset(const std::string& text, std::size_t offset) {
    offset = std::min(offset, text.size());
    return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(offset), '\n'));
}

/// JSON objects map to sections, scalars to values, arrays to comma lists.
inline ptree json_to_tree(const nlohmann::json& j, const std::string& where) {
    ptree out;
    auto scalar = [&](const nlohmann::json& v, const std::string& path) -> std::string {
        if (v.is_string()) return v.get<std::string>();
        if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
        if (v.is_number()) return v.dump();
        throw ConfigError(fmt::format("{}: unsupported value type", path));
    };
    if (!j.is_object()) throw ConfigError(fmt::format("{}: expected an object", where.empty() ? "top level" : where));
    for (const auto& [key, v] : j.items()) {
        const std::string path = where.empty() ? key : where + "." + key;
        if (v.is_object()) {
            if (!where.empty()) throw ConfigError(fmt::format("{}: nested values are not supported", path));
            out.add_child(key, json_to_tree(v, path));
        } else if (v.is_array()) {
            std::string joined;
            for (const auto& e : v) joined += (joined.empty() ? "" : ", ") + scalar(e, path);
            out.put(ptree::path_type(key, '\0'), joined);
        } else {
            out.put(ptree::path_type(key, '\0'), scalar(v, path));
        }
    }
    return out;
}

} // namespace config_detail

enum class ConfigFormat { Ini, Json };

/// Parses a config from text.  Syntax errors carry `origin:line`.
inline ExperimentConfig parse_config(const std::string& text, ConfigFormat format, const std::string& origin = "<config>") {
    config_detail::ptree tree;
    if (format == ConfigFormat::Json) {
        try {
            tree = config_detail::json_to_tree(nlohmann::json::parse(text), "");
        } catch (const nlohmann::json::parse_error& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, config_detail::line_of_offset(text, e.byte), e.what()));
        }
    } else {
        std::istringstream is(text);
        try {
            boost::property_tree::read_ini(is, tree);
        } catch (const boost::property_tree::ini_parser_error& e) {
            throw ConfigError(fmt::format("{}:{}: {}", origin, e.line(), e.message()));
        }
    }
    try {
        return config_detail::from_tree(tree);
    } catch (const ConfigError& e) {
        throw ConfigError(fmt::format("{}: {}", origin, e.what()));
    }
}

/// Reads a config file; `.json` files (or text starting with `{`) are JSON.
inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(fmt::format("cannot open config file '{}'", path));
    std::stringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    const auto first = text.find_first_not_of(" \t\r\n");
    const bool json = (path.size() > 5 && path.substr(path.size() - 5) == ".json") ||
                      (first != std::string::npos && text[first] == '{');
    return parse_config(text, json ? ConfigFormat::Json : ConfigFormat::Ini, path);
}

// Presets.  In fig5 and fig6 only J and D_max are given; the channel, completion and
// reward values below are our assumptions.
namespace presets {

inline constexpr const char* fig5 = R"(
[experiment]
id = fig5

[model]
channels = 5
max_delay = 5
; assumed
p_stay_on = 0.5
q_stay_off = 0.5
p_finish = 0.01
reward_completion = 10
reward_per_slot = 1
penalty_drop = 10

[policies]
list = threshold-ldf, threshold-sdf, threshold-random

[sweep]
thresholds = auto

[simulation]
warmup = 10000
batch_length = 33000
batches = 30
seeds = 1
)";

inline constexpr const char* fig6 = R"(
[experiment]
id = fig6

[model]
max_delay = 5
; assumed
p_stay_on = 0.5
q_stay_off = 0.5
p_finish = 0.01
reward_completion = 10
reward_per_slot = 1
penalty_drop = 10

[policies]
list = heuristic-best-ldf, heuristic-best-sdf, heuristic-best-random

[sweep]
channels = 1:10
thresholds = auto

[simulation]
warmup = 10000
batch_length = 10000
batches = 30
seeds = 1
)";

inline constexpr const char* fig7 = R"(
[experiment]
id = fig7

[model]
channels = 10
p_stay_on = 0.5
q_stay_off = 0.5
max_delay = 5
p_finish = 0.01
reward_per_slot = 0.7
reward_completion = 10
penalty_drop = 10

[rollout_eval]
rewards = 5/5, 10/10
m = auto
targets = auto
n_runs = 20000

[simulation]
seeds = 1
)";

inline constexpr const char* fig8 = R"(
[experiment]
id = fig8

[model]
p_stay_on = 0.5
q_stay_off = 0.5
max_delay = 5
p_finish = 0.01
reward_completion = 10
reward_per_slot = 1
penalty_drop = 10

[policies]
list = greedy, heuristic-best, rollout

[sweep]
channels = 5:10
thresholds = auto

[simulation]
warmup = 10000
batch_length = 10000
batches = 30
seeds = 1

[rollout]
n_runs = 100
max_runs = 1600
guard = 1
sim_warmup = 2000
sim_batch_length = 2000
sim_batches = 10

[boundary]
enabled = true
n_runs = 2000
max_runs = 32000
)";

inline constexpr const char* tiny = R"(
[experiment]
id = tiny

[model]
channels = 1
max_delay = 1
population_cap = 2
p_stay_on = 0.6
q_stay_off = 0.7
p_finish = 0.4
reward_completion = 5
reward_per_slot = 0.5
penalty_drop = 3

[policies]
list = optimal, greedy, heuristic-best

[sweep]
thresholds = auto

[simulation]
warmup = 10000
batch_length = 10000
batches = 30
seeds = 1

[boundary]
enabled = true
n_runs = 2000
max_runs = 32000
)";

} // namespace presets

inline std::vector<std::string> preset_names() { return {"fig5", "fig6", "fig7", "fig8", "tiny"}; }

inline std::string preset_text(const std::string& name) {
    if (name == "fig5") return presets::fig5;
    if (name == "fig6") return presets::fig6;
    if (name == "fig7") return presets::fig7;
    if (name == "fig8") return presets::fig8;
    if (name == "tiny") return presets::tiny;
    throw ConfigError(fmt::format("unknown preset '{}' (available: {})", name, fmt::join(preset_names(), ", ")));
}

inline ExperimentConfig preset_config(const std::string& name) {
    return parse_config(preset_text(name), ConfigFormat::Ini, "preset " + name);
}

// ---------------------------------------------------------------------------
// Runner

/// Runs fn(0) .. fn(n-1) on up to `jobs` threads.  Results must be written to
/// per-index slots so that output order never depends on scheduling.
template <typename Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
    if (jobs <= 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (std::size_t i; (i = next++) < n;) {
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    std::vector<std::thread> pool;
    const auto count = std::min<std::size_t>(static_cast<std::size_t>(jobs), n);
    for (std::size_t t = 0; t < count; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);
}

struct SimulationRow {
    std::string config_id;
    std::string policy;
    std::optional<int> threshold;
    SystemParams params;
    std::uint64_t seed = 0;
    SimulationReport report;
};

struct BoundaryRow {
    std::string config_id;
    SystemParams params;
    std::uint64_t seed = 0;
    BoundaryResult result;
};

inline constexpr const char* simulation_csv_header =
    "config_id,policy,threshold,J,p_stay_on,q_stay_off,D_max,P_f,R_c,R_t,C_q,seed,slots,avg_revenue,ci95,"
    "completions,drops";

namespace detail {
inline std::string params_csv(const SystemParams& p) {
    return fmt::format("{},{},{},{},{},{},{},{}", p.channels, p.p_stay_on, p.q_stay_off, p.max_delay, p.p_finish,
                       p.reward_completion, p.reward_per_slot, p.penalty_drop);
}
} // namespace detail

inline std::string to_csv_line(const SimulationRow& r) {
    return fmt::format("{},{},{},{},{},{},{},{},{},{}", r.config_id, r.policy,
                       r.threshold ? std::to_string(*r.threshold) : std::string(), detail::params_csv(r.params),
                       r.seed, r.report.slots, r.report.avg_revenue, r.report.ci_halfwidth_95,
                       r.report.counters.completions, r.report.counters.drops);
}

/// Boundary rows share the simulation schema: threshold holds the maximising
/// N, slots is 0, ci95 is 1.96 standard errors and the counters are empty.
inline std::string to_csv_line(const BoundaryRow& r) {
    return fmt::format("{},boundary,{},{},{},0,{},{},,", r.config_id, r.result.argmax_N, detail::params_csv(r.params),
                       r.seed, r.result.G_bound, 1.96 * r.result.std_err);
}

/// Threshold with the best pilot revenue; pilot runs use their own sub-stream
/// of `seed` so that the reported run is not the one used for selection.
inline int select_threshold(Allocator allocator, const SystemParams& params, const std::vector<int>& thresholds,
                            const SimulationControls& pilot, std::uint64_t seed) {
    const auto pilot_seed = RandomStream(seed).derive(stream_tag::pilot).key();
    int best = thresholds.front();
    double best_revenue = -std::numeric_limits<double>::infinity();
    for (int t : thresholds) {
        const auto rep = run_simulation(ThresholdPolicy(t, allocator), params, SystemState::empty(params), pilot, pilot_seed);
        if (rep.avg_revenue > best_revenue) {
            best_revenue = rep.avg_revenue;
            best = t;
        }
    }
    return best;
}

/// Every (J, policy, threshold, seed) simulation of the config, in sweep order.
inline std::vector<SimulationRow> run_simulations(const ExperimentConfig& cfg, int jobs = 1) {
    cfg.validate();
    struct Task {
        SystemParams params;
        PolicySpec spec;
        std::optional<int> threshold;
        std::uint64_t seed;
        std::size_t solved; // index into `optimal`
    };

    std::vector<std::pair<std::unique_ptr<ExplicitModel>, std::vector<std::size_t>>> optimal;
    std::vector<Task> tasks;
    for (int J : cfg.channels) {
        const SystemParams p = cfg.params_for(J);
        std::size_t solved = 0;
        if (std::any_of(cfg.policies.begin(), cfg.policies.end(),
                        [](const PolicySpec& s) { return s.kind == PolicySpec::Kind::Optimal; })) {
            auto model = std::make_unique<ExplicitModel>(build_explicit_model(p, cfg.state_limit));
            auto res = solve_average_reward(*model, cfg.solver);
            solved = optimal.size();
            optimal.emplace_back(std::move(model), std::move(res.policy));
        }
        for (const auto& spec : cfg.policies) {
            if (spec.kind == PolicySpec::Kind::Threshold) {
                for (int t : cfg.thresholds_for(p))
                    for (auto seed : cfg.seeds) tasks.push_back({p, spec, t, seed, solved});
            } else {
                for (auto seed : cfg.seeds) tasks.push_back({p, spec, std::nullopt, seed, solved});
            }
        }
    }

    std::vector<SimulationRow> rows(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) {
        const Task& t = tasks[i];
        SimulationControls controls = cfg.simulation;
        std::unique_ptr<Policy> policy;
        std::optional<int> threshold = t.threshold;
        switch (t.spec.kind) {
        case PolicySpec::Kind::Threshold: policy = threshold_heuristic_policy(*threshold, t.spec.allocator); break;
        case PolicySpec::Kind::HeuristicBest:
            threshold = select_threshold(t.spec.allocator, t.params, cfg.thresholds_for(t.params), cfg.pilot, t.seed);
            policy = threshold_heuristic_policy(*threshold, t.spec.allocator);
            break;
        case PolicySpec::Kind::Greedy: policy = greedy_policy(); break;
        case PolicySpec::Kind::Rollout:
            policy = rollout_policy(cfg.rollout);
            if (cfg.rollout_simulation) controls = *cfg.rollout_simulation;
            break;
        case PolicySpec::Kind::Optimal:
            policy = std::make_unique<TabularPolicy>(*optimal[t.solved].first, optimal[t.solved].second);
            break;
        case PolicySpec::Kind::Null: policy = std::make_unique<NullPolicy>(); break;
        }
        rows[i] = {cfg.id, t.spec.name(), threshold, t.params, t.seed,
                   run_simulation(*policy, t.params, SystemState::empty(t.params), controls, t.seed)};
    });
    return rows;
}

/// Revenue boundary at every J, using the first seed.
inline std::vector<BoundaryRow> run_boundaries(const ExperimentConfig& cfg, int jobs = 1) {
    cfg.validate();
    std::vector<BoundaryRow> rows(cfg.channels.size());
    const auto seed = cfg.seeds.front();
    parallel_for(rows.size(), jobs, [&](std::size_t i) {
        const SystemParams p = cfg.params_for(cfg.channels[i]);
        const RandomStream base = RandomStream(seed).derive(stream_tag::boundary).derive(static_cast<std::uint64_t>(p.channels));
        rows[i] = {cfg.id, p, seed, revenue_boundary(p, cfg.boundary.search, base)};
    });
    return rows;
}

inline constexpr const char* curve_csv_header =
    "config_id,J,R_c,C_q,seed,m,N_th,mean,std_err,n_runs,N_c,N_c_std_err,N_d,N_d_std_err";

/// G~(N, theta) over the target range for every J, reward pair and seed.
/// All targets of one curve share a base stream (common random numbers).
inline std::string run_curves(const ExperimentConfig& cfg, int jobs = 1) {
    cfg.validate();
    const CurveSettings curve = cfg.curve.value_or(CurveSettings{});
    struct Task {
        SystemParams params;
        std::uint64_t seed;
        std::size_t pair;
    };
    std::vector<Task> tasks;
    for (int J : cfg.channels) {
        SystemParams p = cfg.params_for(J);
        const auto pairs = curve.rewards.empty() ? std::vector<RewardPair>{{p.reward_completion, p.penalty_drop}}
                                                 : curve.rewards;
        for (std::size_t k = 0; k < pairs.size(); ++k) {
            p.reward_completion = pairs[k].reward_completion;
            p.penalty_drop = pairs[k].penalty_drop;
            for (auto seed : cfg.seeds) tasks.push_back({p, seed, k});
        }
    }
    std::vector<std::string> blocks(tasks.size());
    parallel_for(tasks.size(), jobs, [&](std::size_t i) {
        const auto& t = tasks[i];
        const int m = curve.available.value_or(t.params.channels);
        const auto theta = SystemState::empty(t.params, m);
        std::vector<int> targets = curve.targets;
        if (targets.empty())
            for (int n = 0; n <= std::min(t.params.population_cap, t.params.channels); ++n) targets.push_back(n);
        const RandomStream base = RandomStream(t.seed).derive(stream_tag::curve).derive(t.pair);
        std::string out;
        for (int n : targets) {
            const auto est = estimate_G(n, theta, t.params, curve.n_runs, base, cfg.rollout.max_segment_slots);
            out += fmt::format("{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n", cfg.id, t.params.channels,
                               t.params.reward_completion, t.params.penalty_drop, t.seed, m, n, est.mean_g_bar,
                               est.std_err, est.n_runs, est.mean_completion_rate, est.completion_std_err,
                               est.mean_drop_rate, est.drop_std_err);
        }
        blocks[i] = std::move(out);
    });
    std::string csv = std::string(curve_csv_header) + "\n";
    for (const auto& b : blocks) csv += b;
    return csv;
}

inline std::string simulation_csv(const std::vector<SimulationRow>& rows, const std::vector<BoundaryRow>& bounds = {}) {
    std::string csv = std::string(simulation_csv_header) + "\n";
    for (const auto& r : rows) csv += to_csv_line(r) + "\n";
    for (const auto& b : bounds) csv += to_csv_line(b) + "\n";
    return csv;
}

inline constexpr const char* boundary_csv_header = "config_id,J,seed,m,N_th,mean,std_err,n_runs,is_max";

/// Every evaluated boundary grid point, flagging the maximiser.
inline std::string boundary_csv(const std::vector<BoundaryRow>& rows) {
    std::string csv = std::string(boundary_csv_header) + "\n";
    for (const auto& r : rows)
        for (const auto& est : r.result.grid)
            csv += fmt::format("{},{},{},{},{},{},{},{},{}\n", r.config_id, r.params.channels, r.seed, est.theta.available,
                               est.N_th, est.mean_g_bar, est.std_err, est.n_runs,
                               est.theta.available == r.result.argmax_m && est.N_th == r.result.argmax_N ? 1 : 0);
    return csv;
}

/// Per sweep point: mean revenue and mean CI over seeds, plus the boundary.
inline nlohmann::ordered_json experiment_summary(const ExperimentConfig& cfg, const std::vector<SimulationRow>& rows,
                                                 const std::vector<BoundaryRow>& bounds) {
    nlohmann::ordered_json out;
    out["config_id"] = cfg.id;
    out["model"] = {{"p_stay_on", cfg.params.p_stay_on},
                    {"q_stay_off", cfg.params.q_stay_off},
                    {"max_delay", cfg.params.max_delay},
                    {"p_finish", cfg.params.p_finish},
                    {"reward_completion", cfg.params.reward_completion},
                    {"reward_per_slot", cfg.params.reward_per_slot},
                    {"penalty_drop", cfg.params.penalty_drop}};
    auto& points = out["points"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        double revenue = 0.0, ci = 0.0;
        // Rows of one sweep point are contiguous (seeds innermost), but a
        // heuristic-best row may pick a different threshold per seed.
        while (j < rows.size() && rows[j].policy == rows[i].policy && rows[j].params == rows[i].params &&
               (rows[i].policy.rfind("threshold", 0) != 0 || rows[j].threshold == rows[i].threshold)) {
            revenue += rows[j].report.avg_revenue;
            ci += rows[j].report.ci_halfwidth_95;
            ++j;
        }
        const double n = static_cast<double>(j - i);
        nlohmann::ordered_json point{{"J", rows[i].params.channels}, {"policy", rows[i].policy}};
        point["threshold"] = rows[i].threshold ? nlohmann::ordered_json(*rows[i].threshold) : nlohmann::ordered_json();
        point["seeds"] = j - i;
        point["avg_revenue"] = revenue / n;
        point["ci95"] = ci / n;
        points.push_back(std::move(point));
        i = j;
    }
    auto& boundary = out["boundary"] = nlohmann::ordered_json::array();
    for (const auto& b : bounds)
        boundary.push_back({{"J", b.params.channels},
                            {"G_bound", b.result.G_bound},
                            {"std_err", b.result.std_err},
                            {"argmax_m", b.result.argmax_m},
                            {"argmax_N", b.result.argmax_N}});
    return out;
}

struct ExperimentOutput {
    std::string csv;        // simulation rows followed by boundary rows
    std::string json;       // summary
    std::string curve_csv;  // empty unless the config has [rollout_eval]
};

/// Everything the config asks for: simulations, the boundary when enabled and
/// segment-revenue curves when configured.
inline ExperimentOutput run_experiment(const ExperimentConfig& cfg, int jobs = 1) {
    cfg.validate();
    if (cfg.policies.empty() && !cfg.boundary.enabled && !cfg.curve)
        throw ConfigError("nothing to run: no policies, boundary disabled and no [rollout_eval] section");
    const auto rows = run_simulations(cfg, jobs);
    const auto bounds = cfg.boundary.enabled ? run_boundaries(cfg, jobs) : std::vector<BoundaryRow>{};
    ExperimentOutput out;
    out.csv = simulation_csv(rows, bounds);
    out.json = experiment_summary(cfg, rows, bounds).dump(2) + "\n";
    if (cfg.curve) out.curve_csv = run_curves(cfg, jobs);
    return out;
}

struct SolveOutput {
    int channels = 0;
    std::size_t states = 0;
    SolveResult result;
    std::string json;
};

/// Exact solution at every J of the sweep.
inline std::vector<SolveOutput> solve_command(const ExperimentConfig& cfg) {
    cfg.validate();
    std::vector<SolveOutput> out;
    for (int J : cfg.channels) {
        const auto model = build_explicit_model(cfg.params_for(J), cfg.state_limit);
        auto res = solve_average_reward(model, cfg.solver);
        nlohmann::ordered_json j{{"config_id", cfg.id}, {"J", J}, {"num_states", model.num_states()}};
        j.update(to_json(model, res));
        out.push_back({J, model.num_states(), std::move(res), j.dump(2) + "\n"});
    }
    return out;
}

} // namespace cradm
