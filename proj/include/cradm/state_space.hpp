#pragma once

// Finite state space enumeration and the explicit (tabular) transition and
// reward model used by the exact solver.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "cradm/model.hpp"
#include "cradm/types.hpp"

namespace cradm {

inline constexpr double default_state_limit = 1e7;

/// Number of states (J + 1) * C(N_cap + D_max + 1, D_max + 1), as a double so
/// that oversized instances can be rejected before anything is allocated.
inline double projected_state_count(const SystemParams& params) {
    const int classes = params.delay_classes();
    return (params.channels + 1) * binomial_coefficient(params.population_cap + classes, classes);
}

/// Dense lexicographic ranking of delay profiles with total population <= N_cap.
class ProfileIndexer {
public:
    ProfileIndexer(int classes, int cap) : classes_(classes), cap_(cap) {
        // bounded_[len][s] = number of length-len vectors with sum <= s
        bounded_.assign(classes + 1, std::vector<std::uint64_t>(cap + 1, 1));
        for (int len = 1; len <= classes; ++len)
            for (int s = 0; s <= cap; ++s)
                bounded_[len][s] = bounded_[len - 1][s] + (s > 0 ? bounded_[len][s - 1] : 0);
    }

    std::size_t size() const { return bounded_[classes_][cap_]; }

    std::size_t rank(std::span<const int> profile) const {
        std::size_t r = 0;
        int used = 0;
        for (int i = 0; i < classes_; ++i) {
            for (int x = 0; x < profile[i]; ++x) r += bounded_[classes_ - i - 1][cap_ - used - x];
            used += profile[i];
        }
        return r;
    }

    /// Profiles in rank order.
    std::vector<std::vector<int>> enumerate() const {
        std::vector<std::vector<int>> out;
        out.reserve(size());
        std::vector<int> v(classes_, 0);
        auto rec = [&](auto&& self, int cls, int budget) -> void {
            if (cls == classes_) {
                out.push_back(v);
                return;
            }
            for (int x = 0; x <= budget; ++x) {
                v[cls] = x;
                self(self, cls + 1, budget - x);
            }
            v[cls] = 0;
        };
        rec(rec, 0, cap_);
        return out;
    }

private:
    int classes_;
    int cap_;
    std::vector<std::vector<std::uint64_t>> bounded_;
};

/// Indexed state space.  Index = m * |profiles| + rank(profile), so the empty
/// state with no available channel has index 0.
class StateSpace {
public:
    explicit StateSpace(const SystemParams& params, double limit = default_state_limit)
        : params_(params), indexer_(params.delay_classes(), params.population_cap) {
        params.validate();
        const double projected = projected_state_count(params);
        if (projected > limit) {
            throw CapacityError(fmt::format(
                "state space of {:.3g} states exceeds the limit of {:.3g}; shrink J, D_max or N_cap", projected,
                limit));
        }
        profiles_ = indexer_.enumerate();
    }

    const SystemParams& params() const { return params_; }
    std::size_t size() const { return profiles_.size() * (params_.channels + 1); }
    std::size_t profile_count() const { return profiles_.size(); }

    std::size_t index(const SystemState& s) const {
        return static_cast<std::size_t>(s.available) * profiles_.size() + indexer_.rank(s.delay_profile);
    }

    std::size_t index(int m, std::span<const int> profile) const {
        return static_cast<std::size_t>(m) * profiles_.size() + indexer_.rank(profile);
    }

    SystemState state(std::size_t idx) const {
        return {static_cast<int>(idx / profiles_.size()), profiles_[idx % profiles_.size()]};
    }

    std::vector<SystemState> states() const {
        std::vector<SystemState> out;
        out.reserve(size());
        for (std::size_t i = 0; i < size(); ++i) out.push_back(state(i));
        return out;
    }

private:
    SystemParams params_;
    ProfileIndexer indexer_;
    std::vector<std::vector<int>> profiles_;
};

inline StateSpace enumerate_states(const SystemParams& params, double limit = default_state_limit) {
    return StateSpace(params, limit);
}

struct Transition {
    std::size_t next;
    double prob;
};

struct ActionModel {
    ControlDecision control;
    double expected_reward = 0.0;
    std::vector<Transition> successors; // sorted by `next`, no duplicates
};

struct ExplicitModel {
    StateSpace space;
    std::vector<std::vector<ActionModel>> actions; // indexed by state

    std::size_t num_states() const { return actions.size(); }
};

/// Expected one-slot revenue of `ctrl` in `state`: completions average
/// P_f per served user.
inline double expected_revenue(const SystemState& state, const ControlDecision& ctrl, const SystemParams& params) {
    const auto pool = admitted_profile(state, ctrl.admit);
    const int drops = pool.back() - ctrl.serve.back();
    return params.reward_completion * params.p_finish * ctrl.served() +
           params.reward_per_slot * (state.population() + ctrl.admit) - params.penalty_drop * drops;
}

/// Builds the sparse kernel and expected rewards for every (state, action).
/// Successors are enumerated by completion vector; distinct completion
/// vectors lead to distinct next profiles because the update is triangular.
inline ExplicitModel build_explicit_model(const SystemParams& params, double limit = default_state_limit) {
    ExplicitModel model{StateSpace(params, limit), {}};
    const auto& space = model.space;
    const int classes = params.delay_classes();
    model.actions.resize(space.size());

    std::vector<std::vector<double>> channel_rows;
    for (int m = 0; m <= params.channels; ++m) channel_rows.push_back(channel_transition_row(m, params));

    std::vector<int> done(classes), next_profile(classes);
    for (std::size_t s = 0; s < space.size(); ++s) {
        const SystemState state = space.state(s);
        const auto& row = channel_rows[state.available];
        for (auto& ctrl : feasible_controls(state, params)) {
            ActionModel act;
            act.expected_reward = expected_revenue(state, ctrl, params);
            const auto pool = admitted_profile(state, ctrl.admit);

            std::fill(done.begin(), done.end(), 0);
            auto visit = [&](auto&& self, int cls, double prob) -> void {
                if (prob == 0.0) return;
                if (cls == classes) {
                    next_profile[0] = ctrl.serve[0] - done[0];
                    for (int i = 1; i < classes; ++i)
                        next_profile[i] = ctrl.serve[i] + (pool[i - 1] - ctrl.serve[i - 1]) - done[i];
                    for (int m_next = 0; m_next <= params.channels; ++m_next)
                        if (row[m_next] > 0.0)
                            act.successors.push_back({space.index(m_next, next_profile), row[m_next] * prob});
                    return;
                }
                for (int c = 0; c <= ctrl.serve[cls]; ++c) {
                    done[cls] = c;
                    self(self, cls + 1, prob * binomial_pmf(ctrl.serve[cls], c, params.p_finish));
                }
                done[cls] = 0;
            };
            visit(visit, 0, 1.0);
            std::sort(act.successors.begin(), act.successors.end(),
                      [](const Transition& a, const Transition& b) { return a.next < b.next; });
            act.control = std::move(ctrl);
            model.actions[s].push_back(std::move(act));
        }
    }
    return model;
}

/// States from which `target` is reachable with positive probability when
/// every state plays the action chosen by `pick(state_index)`.
template <typename ActionPicker>
std::vector<bool> states_reaching(const ExplicitModel& model, std::size_t target, ActionPicker pick) {
    const std::size_t n = model.num_states();
    std::vector<std::vector<std::size_t>> predecessors(n);
    for (std::size_t s = 0; s < n; ++s)
        for (const auto& t : model.actions[s][pick(s)].successors) predecessors[t.next].push_back(s);
    std::vector<bool> seen(n, false);
    std::deque<std::size_t> frontier{target};
    seen[target] = true;
    while (!frontier.empty()) {
        const auto s = frontier.front();
        frontier.pop_front();
        for (auto p : predecessors[s])
            if (!seen[p]) {
                seen[p] = true;
                frontier.push_back(p);
            }
    }
    return seen;
}

namespace detail {
inline std::string state_label(const SystemState& s) {
    return fmt::format("{}:{}", s.available, fmt::join(s.delay_profile, ","));
}
inline std::string control_label(const ControlDecision& u) {
    return fmt::format("{}:{}", u.admit, fmt::join(u.serve, ","));
}
} // namespace detail

/// Tab-separated dump, one row per (state, action, successor).
/// States are written as `m:w0,w1,...` and actions as `admit:s0,s1,...`.
inline void write_model_text(const ExplicitModel& model, std::ostream& os) {
    os << "state\taction\tsuccessor\tprobability\treward\n";
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        const auto from = detail::state_label(model.space.state(s));
        for (const auto& act : model.actions[s]) {
            const auto ctrl = detail::control_label(act.control);
            for (const auto& t : act.successors)
                os << fmt::format("{}\t{}\t{}\t{:.17g}\t{:.17g}\n", from, ctrl,
                                  detail::state_label(model.space.state(t.next)), t.prob, act.expected_reward);
        }
    }
}

} // namespace cradm
