#pragma once

// Segment-revenue estimation and the maintain/search rollout policy.
//
// A segment starts in state theta, admits users in its first slot only to
// reach a target population, serves largest-delay-first and ends in the first
// slot in which at least one user departs (normal completion or forced
// termination).  Its average revenue is
//
//   g = n_c * R_c / (delta + 1) - n_d * C_q / (delta + 1) + N * R_t
//
// where n_c, n_d are the departures in the final slot and delta + 1 the
// segment length.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "cradm/model.hpp"
#include "cradm/policies.hpp"
#include "cradm/random.hpp"
#include "cradm/types.hpp"

namespace cradm {

enum class ChannelQuality { Good, Bad };

/// Bad iff fewer channels are available than users are present.
inline ChannelQuality channel_quality(const SystemState& state) {
    return state.available < state.population() ? ChannelQuality::Bad : ChannelQuality::Good;
}

struct SegmentResult {
    double g_bar = 0.0;
    int delta = 0;        // index of the final slot, segment length is delta + 1
    int completions = 0;  // n_c
    int drops = 0;        // n_d
    int population = 0;   // users maintained throughout the segment
    bool truncated = false;

    double completion_rate() const { return completions / (delta + 1.0); }
    double drop_rate() const { return drops / (delta + 1.0); }
};

inline constexpr int default_max_segment_slots = 100'000;

/// One segment sample.  Admissions are capped by J and N_cap, so the maintained
/// population equals `target` whenever the target is reachable in one slot.
/// A segment with no users returns g = 0, delta = 0.  If no departure happens
/// within `max_slots` (possible only when P_f = 0 and every user keeps being
/// served) the segment is cut there with n_c = n_d = 0 and flagged.
inline SegmentResult simulate_segment(int target, const SystemState& theta, const SystemParams& params,
                                      RandomStream& rng, int max_slots = default_max_segment_slots) {
    const int classes = params.delay_classes();
    const int pop = theta.population();
    const int admit = std::clamp(target - pop, 0, std::min(params.channels, params.population_cap - pop));

    SegmentResult out;
    out.population = pop + admit;
    if (out.population == 0) return out;

    std::vector<int> profile = admitted_profile(theta, admit);
    std::vector<int> serve(classes), next(classes);
    int m = theta.available;
    for (int k = 0;; ++k) {
        int budget = m;
        for (int i = classes - 1; i >= 0; --i) {
            serve[i] = std::min(budget, profile[i]);
            budget -= serve[i];
        }
        int finished = 0, drawn = 0;
        std::fill(next.begin(), next.end(), 0);
        for (int i = 0; i < classes; ++i) {
            int done = 0;
            for (int u = 0; u < serve[i]; ++u) done += rng.bernoulli(params.p_finish);
            drawn += serve[i];
            finished += done;
            next[i] += serve[i] - done;
            if (i + 1 < classes) next[i + 1] += profile[i] - serve[i];
        }
        for (; drawn < params.channels; ++drawn) rng.uniform();
        const int dropped = profile[classes - 1] - serve[classes - 1];

        if (finished + dropped > 0 || k + 1 >= max_slots) {
            out.delta = k;
            out.completions = finished;
            out.drops = dropped;
            out.truncated = finished + dropped == 0;
            out.g_bar = (finished * params.reward_completion - dropped * params.penalty_drop) / (k + 1.0) +
                        out.population * params.reward_per_slot;
            return out;
        }
        m = sample_channel_transition(m, params, rng);
        profile.swap(next);
    }
}

/// Replicated segment statistics for one (N, theta).  Replication r always
/// draws from `base.derive(r)`, so estimates for different N built from the
/// same base stream use common random numbers and can be compared pairwise.
struct SegmentEstimate {
    int N_th = 0;
    SystemState theta;
    double mean_g_bar = 0.0;
    double std_err = 0.0;
    int n_runs = 0;
    bool degenerate = false; // n_runs == 1, std_err not estimable
    double mean_completion_rate = 0.0; // N_c
    double completion_std_err = 0.0;
    double mean_drop_rate = 0.0; // N_d
    double drop_std_err = 0.0;
    int truncated = 0;
    std::vector<double> g_samples, completion_samples, drop_samples;
};

namespace detail {
inline void mean_and_se(const std::vector<double>& xs, double& mean, double& se) {
    const double n = static_cast<double>(xs.size());
    mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
}
} // namespace detail

/// Adds replications until the estimate holds `n_runs` samples.
inline void extend_estimate(SegmentEstimate& est, const SystemParams& params, int n_runs, const RandomStream& base,
                            int max_segment_slots = default_max_segment_slots) {
    for (int r = est.n_runs; r < n_runs; ++r) {
        RandomStream rng = base.derive(static_cast<std::uint64_t>(r));
        const auto seg = simulate_segment(est.N_th, est.theta, params, rng, max_segment_slots);
        est.g_samples.push_back(seg.g_bar);
        est.completion_samples.push_back(seg.completion_rate());
        est.drop_samples.push_back(seg.drop_rate());
        est.truncated += seg.truncated;
    }
    est.n_runs = static_cast<int>(est.g_samples.size());
    est.degenerate = est.n_runs == 1;
    detail::mean_and_se(est.g_samples, est.mean_g_bar, est.std_err);
    detail::mean_and_se(est.completion_samples, est.mean_completion_rate, est.completion_std_err);
    detail::mean_and_se(est.drop_samples, est.mean_drop_rate, est.drop_std_err);
}

inline SegmentEstimate estimate_G(int N_th, const SystemState& theta, const SystemParams& params, int n_runs,
                                  const RandomStream& base, int max_segment_slots = default_max_segment_slots) {
    if (n_runs < 1) throw DomainError("n_runs must be >= 1");
    SegmentEstimate est;
    est.N_th = N_th;
    est.theta = theta;
    extend_estimate(est, params, n_runs, base, max_segment_slots);
    return est;
}

struct SearchOptions {
    int n_runs = 100;       // initial replications per candidate
    int max_runs = 1600;    // escalation budget per candidate
    double guard = 1.0;     // required |paired difference| in standard errors
    int max_segment_slots = default_max_segment_slots;
};

struct ThresholdSearch {
    int N_star = 0;
    std::vector<SegmentEstimate> estimates; // ascending N_th
    bool range_exhausted = false;
};

/// Paired comparison of two CRN estimates; escalates replication (doubling,
/// up to the budget) while the difference is within `guard` standard errors.
/// Returns +1 if `b` is better, -1 if `a` is better, 0 on an exact tie or an
/// unresolved comparison whose point estimate does not favour `b`.
inline int compare_estimates(SegmentEstimate& a, SegmentEstimate& b, const SystemParams& params,
                             const SearchOptions& opts, const RandomStream& base) {
    for (;;) {
        const int n = std::min(a.n_runs, b.n_runs);
        std::vector<double> diff(n);
        for (int r = 0; r < n; ++r) diff[r] = b.g_samples[r] - a.g_samples[r];
        double mean, se;
        detail::mean_and_se(diff, mean, se);
        if (mean == 0.0 && se == 0.0) return 0;
        if (std::abs(mean) > opts.guard * se) return mean > 0 ? 1 : -1;
        if (n >= opts.max_runs) return mean > 0 ? 1 : 0;
        const int grown = std::min(2 * n, opts.max_runs);
        extend_estimate(a, params, grown, base, opts.max_segment_slots);
        extend_estimate(b, params, grown, base, opts.max_segment_slots);
    }
}

/// Climbs N_th from the current population while the next candidate is
/// better; stops at the first N' with G(N'-1) <= G(N') >= G(N'+1).  The
/// candidate range ends at min(N_cap, population + J), the largest population
/// reachable by one slot of admissions.
inline ThresholdSearch search_optimal_threshold(const SystemState& theta, const SystemParams& params,
                                                const SearchOptions& opts, const RandomStream& base) {
    if (channel_quality(theta) == ChannelQuality::Bad)
        throw DomainError("threshold search requires a Good channel state");
    const int pop = theta.population();
    const int hi = std::min(params.population_cap, pop + params.channels);

    ThresholdSearch out;
    auto& est = out.estimates;
    est.push_back(estimate_G(pop, theta, params, opts.n_runs, base, opts.max_segment_slots));
    int best = pop;
    for (int N = pop;; ++N) {
        if (N >= hi) {
            out.range_exhausted = true;
            break;
        }
        est.push_back(estimate_G(N + 1, theta, params, opts.n_runs, base, opts.max_segment_slots));
        auto& cur = est[est.size() - 2];
        auto& nxt = est.back();
        if (compare_estimates(cur, nxt, params, opts, base) <= 0) break;
        best = N + 1;
    }
    out.N_star = best;
    return out;
}

/// Maintain on Bad channel states; on Good states search for the best target
/// population and admit towards it.  Allocation is always largest-delay-first.
class RolloutPolicy final : public Policy {
public:
    explicit RolloutPolicy(SearchOptions opts = {}) : opts_(opts) {
        if (opts.n_runs < 1) throw DomainError("n_runs must be >= 1");
    }

    ControlDecision decide(const SystemState& state, const SystemParams& params, RandomStream& rng) const override {
        int admit = 0;
        if (channel_quality(state) == ChannelQuality::Good) {
            const RandomStream base(rng.next_u64());
            const auto search = search_optimal_threshold(state, params, opts_, base);
            const int pop = state.population();
            admit = std::clamp(search.N_star - pop, 0, std::min(params.channels, params.population_cap - pop));
        }
        return {admit, allocate_largest_delay_first(state.available, admitted_profile(state, admit))};
    }

    std::string name() const override { return "rollout"; }
    const SearchOptions& options() const { return opts_; }

private:
    SearchOptions opts_;
};

inline std::unique_ptr<Policy> rollout_policy(SearchOptions opts = {}) {
    return std::make_unique<RolloutPolicy>(opts);
}

} // namespace cradm
