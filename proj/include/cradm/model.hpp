#pragma once

// Slot dynamics of the overlay network: channel-count transition law,
// feasible controls, the user-state update and revenue accounting.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cradm/random.hpp"
#include "cradm/types.hpp"

namespace cradm {

namespace detail {
inline constexpr int exact_binomial_limit = 30;
}

/// C(n, k) as a double.  Exact integer arithmetic up to n = 30, log-gamma above.
inline double binomial_coefficient(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    if (n <= detail::exact_binomial_limit) {
        std::uint64_t c = 1;
        k = std::min(k, n - k);
        for (int i = 0; i < k; ++i) c = c * static_cast<std::uint64_t>(n - i) / static_cast<std::uint64_t>(i + 1);
        return static_cast<double>(c);
    }
    return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

inline double binomial_pmf(int n, int k, double p) {
    if (k < 0 || k > n) return 0.0;
    if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
    if (p >= 1.0) return k == n ? 1.0 : 0.0;
    if (n <= detail::exact_binomial_limit)
        return binomial_coefficient(n, k) * std::pow(p, k) * std::pow(1.0 - p, n - k);
    const double log_c = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
    return std::exp(log_c + k * std::log(p) + (n - k) * std::log1p(-p));
}

/// Probability that `m` available channels become `m_next` available channels
/// one slot later.  The m currently available channels stay available
/// independently with probability p_stay_on; each of the J - m occupied ones
/// frees up with probability 1 - q_stay_off.
inline double channel_transition_prob(int m, int m_next, const SystemParams& params) {
    const int J = params.channels;
    if (m < 0 || m > J || m_next < 0 || m_next > J)
        throw DomainError("channel counts must lie in [0, J]");
    double total = 0.0;
    for (int kept = std::max(0, m_next - (J - m)); kept <= std::min(m, m_next); ++kept) {
        total += binomial_pmf(m, kept, params.p_stay_on) *
                 binomial_pmf(J - m, m_next - kept, 1.0 - params.q_stay_off);
    }
    return total;
}

inline std::vector<double> channel_transition_row(int m, const SystemParams& params) {
    std::vector<double> row(params.channels + 1);
    for (int next = 0; next <= params.channels; ++next) row[next] = channel_transition_prob(m, next, params);
    return row;
}

/// Draws the next channel count.  Consumes exactly J uniforms per call so that
/// simulations sharing a stream stay aligned slot by slot.
inline int sample_channel_transition(int m, const SystemParams& params, RandomStream& rng) {
    if (m < 0 || m > params.channels) throw DomainError("channel count out of range [0, J]");
    int next = 0;
    for (int c = 0; c < m; ++c) next += rng.bernoulli(params.p_stay_on);
    for (int c = m; c < params.channels; ++c) next += rng.bernoulli(1.0 - params.q_stay_off);
    return next;
}

/// Delay profile after this slot's admissions join class 0.
inline std::vector<int> admitted_profile(const SystemState& state, int admit) {
    std::vector<int> profile = state.delay_profile;
    if (!profile.empty()) profile[0] += admit;
    return profile;
}

/// Empty string when feasible, otherwise the first violated rule.
inline std::string infeasibility_reason(const SystemState& state, const ControlDecision& ctrl,
                                        const SystemParams& params) {
    if (static_cast<int>(ctrl.serve.size()) != params.delay_classes()) return "service vector has wrong length";
    if (ctrl.admit < 0 || ctrl.admit > params.channels) return "admissions outside [0, J]";
    if (state.population() + ctrl.admit > params.population_cap) return "admissions exceed N_cap";
    const auto pool = admitted_profile(state, ctrl.admit);
    for (int i = 0; i < params.delay_classes(); ++i) {
        if (ctrl.serve[i] < 0) return "negative service count";
        if (ctrl.serve[i] > pool[i]) return "service exceeds class population";
    }
    if (ctrl.served() > state.available) return "service exceeds available channels";
    return {};
}

inline bool is_feasible(const SystemState& state, const ControlDecision& ctrl, const SystemParams& params) {
    return infeasibility_reason(state, ctrl, params).empty();
}

/// All feasible decisions, ordered by admissions and then lexicographically by
/// the service vector.  Index 0 is always the idle decision.
inline std::vector<ControlDecision> feasible_controls(const SystemState& state, const SystemParams& params) {
    std::vector<ControlDecision> out;
    const int classes = params.delay_classes();
    const int max_admit = std::min(params.channels, params.population_cap - state.population());
    ControlDecision ctrl{0, std::vector<int>(classes, 0)};

    for (int admit = 0; admit <= max_admit; ++admit) {
        ctrl.admit = admit;
        const auto pool = admitted_profile(state, admit);
        auto fill = [&](auto&& self, int cls, int budget) -> void {
            if (cls == classes) {
                out.push_back(ctrl);
                return;
            }
            for (int k = 0; k <= std::min(pool[cls], budget); ++k) {
                ctrl.serve[cls] = k;
                self(self, cls + 1, budget - k);
            }
            ctrl.serve[cls] = 0;
        };
        fill(fill, 0, state.available);
    }
    return out;
}

inline double revenue_of(std::span<const int> completions, int maintained, int drops, const SystemParams& params) {
    int finished = 0;
    for (int c : completions) finished += c;
    return params.reward_completion * finished + params.reward_per_slot * maintained - params.penalty_drop * drops;
}

/// Deterministic slot update given the realised completions and next channel
/// count.  Unserved users move up one delay class; unserved users already at
/// D_max are forced out.  With D_max = 0 this includes unserved newcomers.
inline SlotOutcome apply_control(const SystemState& state, const ControlDecision& ctrl, int m_next,
                                 std::span<const int> completions, const SystemParams& params) {
    if (auto why = infeasibility_reason(state, ctrl, params); !why.empty()) {
        std::ostringstream msg;
        msg << "infeasible control " << ctrl << " at state " << state << ": " << why;
        throw ContractViolation(msg.str());
    }
    const int classes = params.delay_classes();
    if (static_cast<int>(completions.size()) != classes) throw ContractViolation("completion vector has wrong length");
    for (int i = 0; i < classes; ++i)
        if (completions[i] < 0 || completions[i] > ctrl.serve[i])
            throw ContractViolation("completions exceed served users");
    if (m_next < 0 || m_next > params.channels) throw ContractViolation("next channel count out of range");

    const auto pool = admitted_profile(state, ctrl.admit);
    SlotOutcome out;
    out.completions.assign(completions.begin(), completions.end());
    out.drops = pool[classes - 1] - ctrl.serve[classes - 1];
    out.maintained = state.population() + ctrl.admit;
    out.next_state.available = m_next;
    out.next_state.delay_profile.assign(classes, 0);
    out.next_state.delay_profile[0] = ctrl.serve[0] - completions[0];
    for (int i = 1; i < classes; ++i)
        out.next_state.delay_profile[i] = ctrl.serve[i] + (pool[i - 1] - ctrl.serve[i - 1]) - completions[i];
    out.revenue = revenue_of(completions, out.maintained, out.drops, params);
    return out;
}

/// Per-class completions, Binomial(serve[i], P_f) independently.  Consumes
/// max(J, served) uniforms per call.
inline std::vector<int> sample_completions(const ControlDecision& ctrl, const SystemParams& params, RandomStream& rng) {
    std::vector<int> done(ctrl.serve.size(), 0);
    int draws = 0;
    for (std::size_t i = 0; i < ctrl.serve.size(); ++i) {
        for (int k = 0; k < ctrl.serve[i]; ++k) done[i] += rng.bernoulli(params.p_finish);
        draws += ctrl.serve[i];
    }
    for (; draws < params.channels; ++draws) rng.uniform();
    return done;
}

} // namespace cradm
