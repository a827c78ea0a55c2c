// Acceptance gate: one PASS/FAIL line per criterion, indented diagnostics
// underneath.  Exit status is non-zero when any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "cradm/experiment.hpp"
#include "oracles.hpp"

using namespace cradm;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void check(bool ok, std::string note) {
        if (!ok) pass = false;
        notes.push_back((ok ? "ok   " : "FAIL ") + std::move(note));
    }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double std_error(const SimulationReport& r) {
    const double b = static_cast<double>(r.batch_means.size());
    double ss = 0.0;
    for (double x : r.batch_means) ss += (x - r.avg_revenue) * (x - r.avg_revenue);
    return std::sqrt(ss / (b - 1.0) / b);
}

int jobs() { return static_cast<int>(std::max(1u, std::thread::hardware_concurrency())); }

SystemParams tiny_params(int D, int cap) {
    SystemParams p;
    p.channels = 1;
    p.max_delay = D;
    p.population_cap = cap;
    p.p_stay_on = 0.6;
    p.q_stay_off = 0.7;
    p.p_finish = 0.4;
    p.reward_completion = 5.0;
    p.reward_per_slot = 0.5;
    p.penalty_drop = 3.0;
    return p;
}

std::vector<SystemParams> tiny_instances() {
    std::vector<SystemParams> out;
    for (int D : {0, 1})
        for (int cap : {1, 2}) out.push_back(tiny_params(D, cap));
    return out;
}

SystemParams fig8_params(int J) { return preset_config("fig8").params_for(J); }

Outcome kernel_exactness() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int J = 1; J <= 8; ++J)
        for (double p : {0.0, 0.3, 0.5, 1.0})
            for (double q : {0.0, 0.3, 0.5, 1.0}) {
                SystemParams prm;
                prm.channels = J;
                prm.p_stay_on = p;
                prm.q_stay_off = q;
                for (int m = 0; m <= J; ++m)
                    for (int n = 0; n <= J; ++n)
                        worst = std::max(worst, std::abs(channel_transition_prob(m, n, prm) -
                                                         oracle::channel_prob_enumerated(J, m, n, p, q)));
            }
    const double secs = seconds_since(t0);
    o.check(worst <= 1e-12, fmt::format("max |kernel - enumeration| = {:.3g} (tol 1e-12)", worst));
    o.check(secs < 10.0, fmt::format("runtime {:.3f} s (limit 10 s)", secs));
    return o;
}

Outcome worked_example() {
    Outcome o;
    SystemParams prm;
    prm.channels = 10;
    prm.max_delay = 2;
    prm.population_cap = 30;
    const auto out = apply_control({7, {1, 3, 2}}, {2, {2, 3, 2}}, 4, std::vector<int>{0, 0, 0}, prm);
    std::ostringstream got;
    got << out.next_state;
    o.check(out.next_state == SystemState{4, {2, 4, 2}}, "next state " + got.str() + ", expected {4,(2,4,2)}");
    return o;
}

Outcome solver_oracle() {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    for (const auto& p : tiny_instances()) {
        const auto model = build_explicit_model(p);
        const auto res = solve_average_reward(model);
        const auto best = oracle::enumerate_policies(model);
        const double residual = bellman_residual(model, res.A_star, res.h);
        o.check(std::abs(res.A_star - best.gain) <= 1e-6 && residual <= 1e-6,
                fmt::format("D={} N_cap={}: A*={:.10f} enumeration={:.10f} ({} policies) residual={:.2g}",
                            p.max_delay, p.population_cap, res.A_star, best.gain, best.policies_checked, residual));
    }
    const double secs = seconds_since(t0);
    o.check(secs < 60.0, fmt::format("runtime {:.2f} s (limit 60 s)", secs));
    return o;
}

Outcome solver_simulator_tie() {
    Outcome o;
    auto instances = tiny_instances();
    instances.push_back(preset_config("tiny").params_for(1));
    std::uint64_t seed = 400;
    for (const auto& p : instances) {
        const auto model = build_explicit_model(p);
        const auto res = solve_average_reward(model);
        const TabularPolicy pol(model, res.policy);
        const auto rep = run_simulation(pol, p, SystemState::empty(p), SimulationControls{10'000, 33'000, 30}, ++seed);
        o.check(std::abs(rep.avg_revenue - res.A_star) <= rep.ci_halfwidth_95,
                fmt::format("D={} N_cap={}: simulated {:.5f} +- {:.5f}, A* {:.5f}", p.max_delay, p.population_cap,
                            rep.avg_revenue, rep.ci_halfwidth_95, res.A_star));
    }
    return o;
}

Outcome initial_state_independence() {
    Outcome o;
    const auto p = fig8_params(5);
    auto cfg = preset_config("fig8");
    const std::vector<int> thresholds = cfg.thresholds_for(p);
    const int T = select_threshold(Allocator::LargestDelayFirst, p, thresholds, cfg.pilot, 11);
    const std::vector<SystemState> starts{SystemState::empty(p), {5, {9, 0, 0, 0, 0, 0}}, {0, {5, 5, 5, 5, 5, 5}}};
    const SimulationControls window{10'000, 33'000, 30};
    auto describe = [](const std::vector<SimulationReport>& reps) {
        std::string vals;
        for (const auto& r : reps) vals += fmt::format(" {:.4f}+-{:.4f}", r.avg_revenue, r.ci_halfwidth_95);
        return vals;
    };
    // Shared streams: the start state is the only difference between runs.
    const auto paired = compare_initial_states(ThresholdPolicy(T), p, starts, window, 12);
    o.check(initial_states_agree(paired),
            fmt::format("J=5 threshold {} from empty, 9 fresh users, 30 users over all delays, common seed:{}", T, describe(paired)));
    std::vector<SimulationReport> independent;
    std::uint64_t seed = 12;
    for (const auto& s : starts) independent.push_back(run_simulation(ThresholdPolicy(T), p, s, window, seed++));
    o.notes.push_back(fmt::format("info independent seeds 12..14:{} ({})", describe(independent),
                                  initial_states_agree(independent) ? "agree" : "one pair outside its joint CI"));
    return o;
}

Outcome allocator_ordering() {
    Outcome o;
    const auto cfg = preset_config("fig5");
    const auto rows = run_simulations(cfg, jobs());
    std::map<std::pair<std::string, int>, const SimulationRow*> at;
    for (const auto& r : rows) at[{r.policy, *r.threshold}] = &r;
    int strict_sdf = 0, strict_rand = 0, violations = 0;
    std::string worst;
    double worst_margin = std::numeric_limits<double>::infinity();
    for (int T : cfg.thresholds_for(cfg.params_for(5))) {
        const auto& ldf = at.at({"threshold-ldf", T})->report;
        for (const char* other : {"threshold-sdf", "threshold-random"}) {
            const auto& rep = at.at({other, T})->report;
            const double se = std::hypot(std_error(ldf), std_error(rep));
            const double diff = ldf.avg_revenue - rep.avg_revenue;
            if (diff < -2 * se) ++violations;
            if (diff > 2 * se) ++(other[10] == 's' ? strict_sdf : strict_rand);
            if (diff / se < worst_margin) {
                worst_margin = diff / se;
                worst = fmt::format("{} at T={}: LDF {:.4f} vs {:.4f}", other, T, ldf.avg_revenue, rep.avg_revenue);
            }
        }
    }
    o.check(violations == 0, fmt::format("LDF below another allocator by > 2 se at {} points; closest: {} ({:.2f} se)",
                                         violations, worst, worst_margin));
    o.check(strict_sdf + strict_rand > 0,
            fmt::format("strict separation at {} thresholds vs SDF, {} vs random", strict_sdf, strict_rand));
    o.notes.push_back(fmt::format("info {} slots per point", rows.front().report.slots));
    return o;
}

std::vector<std::vector<double>> parse_curve_csv(const std::string& csv) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::istringstream fields(line);
        std::string f;
        std::getline(fields, f, ','); // config_id
        while (std::getline(fields, f, ',')) row.push_back(std::stod(f));
        rows.push_back(row);
    }
    return rows;
}

Outcome segment_shape() {
    Outcome o;
    const auto cfg = preset_config("fig7");
    // Columns after config_id: J R_c C_q seed m N mean se n N_c se N_d se.
    const auto rows = parse_curve_csv(run_curves(cfg, jobs()));
    for (const auto& pair : cfg.curve->rewards) {
        std::vector<const std::vector<double>*> c;
        for (const auto& r : rows)
            if (r[1] == pair.reward_completion && r[2] == pair.penalty_drop) c.push_back(&r);
        auto series = [&](int value, int err) {
            std::vector<std::pair<double, double>> s;
            for (const auto* r : c) s.push_back({(*r)[value], (*r)[err]});
            return s;
        };
        // sign = +1 checks non-decreasing, curvature = -1 concave, +1 convex.
        auto shape = [&](const char* name, const std::vector<std::pair<double, double>>& s, int sign, int curvature) {
            int bad_slope = 0, bad_curve = 0;
            for (std::size_t k = 0; k + 1 < s.size(); ++k) {
                const double d = s[k + 1].first - s[k].first;
                if (sign * d < -2 * std::hypot(s[k].second, s[k + 1].second)) ++bad_slope;
            }
            for (std::size_t k = 1; k + 1 < s.size(); ++k) {
                const double d2 = s[k + 1].first - 2 * s[k].first + s[k - 1].first;
                const double se = std::sqrt(s[k + 1].second * s[k + 1].second + 4 * s[k].second * s[k].second +
                                            s[k - 1].second * s[k - 1].second);
                if (curvature * d2 < -2 * se) ++bad_curve;
            }
            o.check(bad_slope + bad_curve == 0,
                    fmt::format("R_c/C_q={}/{} {}: {} slope and {} curvature violations over N=0..{}",
                                pair.reward_completion, pair.penalty_drop, name, bad_slope, bad_curve, s.size() - 1));
        };
        shape("N_c non-decreasing, concave", series(9, 10), +1, -1);
        shape("N_d non-decreasing, convex", series(11, 12), +1, +1);
        shape("G concave", series(6, 7), 0, -1);
    }
    return o;
}

Outcome fresh_dominance() {
    Outcome o;
    auto p = preset_config("fig7").params_for(10);
    RandomStream pick(808);
    for (int k = 0; k < 5; ++k) {
        const int m = pick.uniform_int(1, p.channels);
        const int N = pick.uniform_int(2, p.channels);
        std::vector<int> aged(p.delay_classes(), 0);
        for (int u = 0; u < N; ++u) ++aged[static_cast<std::size_t>(pick.uniform_int(1, p.max_delay))];
        std::vector<int> fresh(p.delay_classes(), 0);
        fresh[0] = N;
        const RandomStream base(900 + static_cast<std::uint64_t>(k));
        const auto a = estimate_G(N, {m, fresh}, p, 4000, base);
        const auto b = estimate_G(N, {m, aged}, p, 4000, base);
        // Both estimates use the same replication streams, so the interval is
        // taken on the paired per-run differences.
        std::vector<double> diff(a.g_samples.size());
        for (std::size_t r = 0; r < diff.size(); ++r) diff[r] = a.g_samples[r] - b.g_samples[r];
        double mean = 0.0, se = 0.0;
        detail::mean_and_se(diff, mean, se);
        std::ostringstream aged_s;
        aged_s << aged;
        o.check(mean > 1.96 * se,
                fmt::format("m={} N={} aged {}: fresh {:.4f} vs aged {:.4f}, paired diff {:.5f} (CI {:.5f}, "
                            "unpaired CI {:.4f})",
                            m, N, aged_s.str(), a.mean_g_bar, b.mean_g_bar, mean, 1.96 * se,
                            1.96 * std::hypot(a.std_err, b.std_err)));
    }
    return o;
}

Outcome policy_ordering() {
    Outcome o;
    const auto cfg = preset_config("fig8");
    const auto t0 = std::chrono::steady_clock::now();
    const auto rows = run_simulations(cfg, jobs());
    const auto bounds = run_boundaries(cfg, jobs());
    for (std::size_t i = 0; i < cfg.channels.size(); ++i) {
        const int J = cfg.channels[i];
        auto find = [&](const std::string& policy) -> const SimulationRow& {
            for (const auto& r : rows)
                if (r.params.channels == J && r.policy == policy) return r;
            throw std::runtime_error("missing row " + policy);
        };
        const auto& greedy = find("greedy").report;
        const auto& heuristic = find("heuristic-best-ldf").report;
        const auto& rollout = find("rollout").report;
        const auto& bound = bounds[i].result;
        auto within = [](double hi, double se_hi, double lo, double se_lo) {
            return hi - lo >= -2 * std::hypot(se_hi, se_lo);
        };
        const bool b_r = within(bound.G_bound, bound.std_err, rollout.avg_revenue, std_error(rollout));
        const bool r_h = within(rollout.avg_revenue, std_error(rollout), heuristic.avg_revenue, std_error(heuristic));
        const bool h_g = within(heuristic.avg_revenue, std_error(heuristic), greedy.avg_revenue, std_error(greedy));
        o.check(b_r && r_h && h_g,
                fmt::format("J={}: boundary {:.3f} {} rollout {:.3f} {} heuristic(T={}) {:.3f} {} greedy {:.3f}", J,
                            bound.G_bound, b_r ? ">=" : "<", rollout.avg_revenue, r_h ? ">=" : "<",
                            *find("heuristic-best-ldf").threshold, heuristic.avg_revenue, h_g ? ">=" : "<",
                            greedy.avg_revenue));
    }
    o.notes.push_back(fmt::format("info runtime {:.0f} s", seconds_since(t0)));
    return o;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

Outcome cli_determinism() {
    Outcome o;
    const auto root = std::filesystem::temp_directory_path() / "cradm_acceptance";
    std::filesystem::remove_all(root);
    std::filesystem::create_directories(root);
    const auto ini = root / "curve.ini";
    std::ofstream(ini) << "[experiment]\nid = curve\n[model]\nchannels = 4\nmax_delay = 2\np_finish = 0.05\n"
                          "reward_completion = 10\nreward_per_slot = 0.7\npenalty_drop = 10\n"
                          "[rollout_eval]\nrewards = 5/5, 10/10\nn_runs = 500\n";
    struct Case {
        std::string args, file;
    };
    const std::vector<Case> cases{
        {"simulate --preset tiny --seed 5", "tiny_simulate.csv"},
        {"experiment --preset tiny --seed 5", "tiny.csv"},
        {"boundary --preset tiny --seed 5", "tiny_boundary.csv"},
        {"rollout-eval --config " + ini.string() + " --seed 5", "curve_rollout_eval.csv"},
        {"experiment --preset tiny --seed 5 --jobs 3", "tiny.csv"},
    };
    std::string first_experiment;
    for (std::size_t k = 0; k < cases.size(); ++k) {
        std::string outputs[2];
        bool ran = true;
        for (int rep = 0; rep < 2; ++rep) {
            const auto dir = root / fmt::format("c{}_{}", k, rep);
            const auto cmd = fmt::format("{} {} --out {} > /dev/null 2>&1", CRADM_CLI, cases[k].args, dir.string());
            ran = ran && std::system(cmd.c_str()) == 0;
            outputs[rep] = slurp(dir / cases[k].file);
        }
        if (k == 1) first_experiment = outputs[0];
        const bool same = ran && !outputs[0].empty() && outputs[0] == outputs[1] &&
                          (k != 4 || outputs[0] == first_experiment);
        o.check(same, fmt::format("cradm {}: {} bytes, {}", cases[k].args, outputs[0].size(),
                                  same ? "identical" : "differs or failed"));
    }
    return o;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"kernel exactness", kernel_exactness},
        {"worked slot example", worked_example},
        {"solver vs policy enumeration", solver_oracle},
        {"solver vs simulator", solver_simulator_tie},
        {"initial-state independence", initial_state_independence},
        {"LDF allocator ordering", allocator_ordering},
        {"segment revenue shape", segment_shape},
        {"fresh profile dominance", fresh_dominance},
        {"boundary >= rollout >= heuristic >= greedy", policy_ordering},
        {"CLI determinism", cli_determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome out;
        try {
            out = criteria[i].second();
        } catch (const std::exception& e) {
            out.check(false, std::string("exception: ") + e.what());
        }
        std::cout << fmt::format("{} {:>2} {}", out.pass ? "PASS" : "FAIL", i + 1, criteria[i].first) << std::endl;
        for (const auto& n : out.notes) std::cout << "     " << n << std::endl;
        failed += out.pass ? 0 : 1;
    }
    std::cout << fmt::format("{} of {} criteria passed", criteria.size() - static_cast<std::size_t>(failed),
                             criteria.size())
              << std::endl;
    return failed == 0 ? 0 : 1;
}
