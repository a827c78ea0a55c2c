// Solve a small instance exactly, then compare a few policies by simulation.

#include <fmt/format.h>

#include "cradm/experiment.hpp"

int main() {
    using namespace cradm;
    SystemParams p;
    p.channels = 2;
    p.max_delay = 1;
    p.population_cap = 4;
    p.p_stay_on = 0.7;
    p.q_stay_off = 0.6;
    p.p_finish = 0.3;
    p.reward_completion = 5.0;
    p.reward_per_slot = 0.5;
    p.penalty_drop = 3.0;

    const auto model = build_explicit_model(p);
    const auto solved = solve_average_reward(model);
    fmt::print("{} states, optimal average revenue {:.4f} ({} iterations)\n", model.num_states(), solved.A_star,
               solved.iterations);

    const TabularPolicy optimal(model, solved.policy);
    const GreedyPolicy greedy;
    const ThresholdPolicy threshold(2);
    SearchOptions search;
    search.n_runs = 50;
    search.max_runs = 400;
    const RolloutPolicy rollout(search);

    const SimulationControls controls{2'000, 2'000, 10};
    for (const Policy* pol : std::initializer_list<const Policy*>{&optimal, &greedy, &threshold, &rollout}) {
        const auto rep = run_simulation(*pol, p, SystemState::empty(p), controls, 42);
        fmt::print("{:<14} {:.4f} +- {:.4f}\n", pol->name(), rep.avg_revenue, rep.ci_halfwidth_95);
    }

    SearchOptions bound_search;
    bound_search.n_runs = 2'000;
    const auto bound = revenue_boundary(p, bound_search, RandomStream(7));
    fmt::print("revenue boundary {:.4f} at m={}, N={}\n", bound.G_bound, bound.argmax_m, bound.argmax_N);
}
