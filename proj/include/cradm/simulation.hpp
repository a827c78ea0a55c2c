#pragma once

// Long-horizon episode engine with batch-means confidence intervals.

#include <cmath>
#include <cstdint>
#include <vector>

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include "cradm/model.hpp"
#include "cradm/policies.hpp"
#include "cradm/random.hpp"
#include "cradm/types.hpp"

namespace cradm {

struct SimulationControls {
    std::int64_t warmup = 10'000;
    std::int64_t batch_length = 10'000;
    int batches = 30;

    std::int64_t total_slots() const { return warmup + batch_length * batches; }
};

/// Totals over the measured (post-warmup) window.
struct SimulationCounters {
    std::int64_t completions = 0;
    std::int64_t drops = 0;
    std::int64_t admissions = 0;
    std::int64_t served_user_slots = 0;
    std::int64_t maintained_user_slots = 0;
    int start_population = 0; // population when the window opened
    int final_population = 0;
};

struct SimulationReport {
    double avg_revenue = 0.0;
    double ci_halfwidth_95 = 0.0;
    std::int64_t slots = 0;
    std::int64_t warmup = 0;
    int batches = 0;
    std::int64_t batch_length = 0;
    double total_revenue = 0.0; // measured window only
    std::vector<double> batch_means;
    SimulationCounters counters;
    std::uint64_t seed = 0;
};

/// Half-width of a two-sided 95% Student-t interval on the batch means.
inline double batch_means_halfwidth(const std::vector<double>& means) {
    const double b = static_cast<double>(means.size());
    double mean = 0.0;
    for (double x : means) mean += x;
    mean /= b;
    double ss = 0.0;
    for (double x : means) ss += (x - mean) * (x - mean);
    const boost::math::students_t dist(b - 1.0);
    return boost::math::quantile(dist, 0.975) * std::sqrt(ss / (b - 1.0) / b);
}

/// Runs `policy` from `initial` for warmup + batches * batch_length slots.
///
/// Each slot: the policy decides, completions are drawn, the next channel
/// count is sensed and the state is updated.  Channel, completion and policy
/// draws come from independent sub-streams of `seed`, so two runs with the
/// same seed see the same channel sample path regardless of the policy.
inline SimulationReport run_simulation(const Policy& policy, const SystemParams& params, const SystemState& initial,
                                       const SimulationControls& controls, std::uint64_t seed) {
    params.validate();
    check_state(initial, params);
    if (controls.batches < 10) throw DomainError("at least 10 batches are required");
    if (controls.batch_length < 1 || controls.warmup < 0) throw DomainError("invalid simulation window");

    const RandomStream master(seed);
    RandomStream channel_rng = master.derive(stream_tag::channel);
    RandomStream completion_rng = master.derive(stream_tag::completion);
    RandomStream policy_rng = master.derive(stream_tag::policy);

    SimulationReport rep;
    rep.seed = seed;
    rep.warmup = controls.warmup;
    rep.batches = controls.batches;
    rep.batch_length = controls.batch_length;
    rep.slots = controls.total_slots();

    SystemState state = initial;
    auto& c = rep.counters;
    double batch_sum = 0.0;
    for (std::int64_t k = 0; k < rep.slots; ++k) {
        const bool measured = k >= controls.warmup;
        if (k == controls.warmup) c.start_population = state.population();

        const ControlDecision ctrl = policy.decide(state, params, policy_rng);
        if (auto why = infeasibility_reason(state, ctrl, params); !why.empty()) {
            throw ContractViolation(fmt::format("policy '{}' returned an infeasible control at slot {}: {}",
                                                policy.name(), k, why));
        }
        const auto done = sample_completions(ctrl, params, completion_rng);
        const int m_next = sample_channel_transition(state.available, params, channel_rng);
        SlotOutcome out = apply_control(state, ctrl, m_next, done, params);

        if (measured) {
            batch_sum += out.revenue;
            rep.total_revenue += out.revenue;
            for (int d : out.completions) c.completions += d;
            c.drops += out.drops;
            c.admissions += ctrl.admit;
            c.served_user_slots += ctrl.served();
            c.maintained_user_slots += out.maintained;
            if ((k - controls.warmup + 1) % controls.batch_length == 0) {
                rep.batch_means.push_back(batch_sum / static_cast<double>(controls.batch_length));
                batch_sum = 0.0;
            }
        }
        state = std::move(out.next_state);
    }
    c.final_population = state.population();
    rep.avg_revenue = rep.total_revenue / static_cast<double>(controls.batch_length * controls.batches);
    rep.ci_halfwidth_95 = batch_means_halfwidth(rep.batch_means);
    return rep;
}

/// Convenience form: splits `slots - warmup` into `batches` equal batches
/// (any remainder is dropped, `SimulationReport::slots` reports what ran).
inline SimulationReport run_simulation(const Policy& policy, const SystemParams& params, const SystemState& initial,
                                       std::int64_t slots, std::int64_t warmup, int batches, std::uint64_t seed) {
    if (slots <= warmup) throw DomainError("slots must exceed warmup");
    if (batches < 10) throw DomainError("at least 10 batches are required");
    return run_simulation(policy, params, initial, SimulationControls{warmup, (slots - warmup) / batches, batches},
                          seed);
}

/// Same policy and seed from several initial states.  Because the sub-streams
/// are shared, the runs see common random numbers.
inline std::vector<SimulationReport> compare_initial_states(const Policy& policy, const SystemParams& params,
                                                            const std::vector<SystemState>& states,
                                                            const SimulationControls& controls, std::uint64_t seed) {
    std::vector<SimulationReport> out;
    out.reserve(states.size());
    for (const auto& s : states) out.push_back(run_simulation(policy, params, s, controls, seed));
    return out;
}

/// Pairwise check that every difference of averages lies inside the joint
/// 95% half-width sqrt(ci_a^2 + ci_b^2).
inline bool initial_states_agree(const std::vector<SimulationReport>& reports) {
    for (std::size_t i = 0; i < reports.size(); ++i)
        for (std::size_t j = i + 1; j < reports.size(); ++j) {
            const double joint = std::hypot(reports[i].ci_halfwidth_95, reports[j].ci_halfwidth_95);
            if (std::abs(reports[i].avg_revenue - reports[j].avg_revenue) > joint) return false;
        }
    return true;
}

} // namespace cradm
