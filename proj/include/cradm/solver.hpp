#pragma once

// Exact average-revenue solver for explicit models (relative value iteration).

#include <algorithm>
#include <concepts>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <vector>

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "cradm/state_space.hpp"

namespace cradm {

struct SolveOptions {
    double tol = 1e-9;          // stop when span(v_{l+1} - v_l) < tol
    int max_iter = 1'000'000;
    std::size_t reference = 0;  // state pinned to h = 0
    // Aperiodicity transform P -> tau P + (1 - tau) I.  tau = 1 is plain RVI;
    // tau < 1 guarantees convergence on periodic chains and leaves the gain
    // and the original-model differential values unchanged.
    double aperiodicity = 1.0;
};

struct SolveResult {
    double A_star = 0.0;      // optimal average revenue per slot
    double gain_lower = 0.0;  // min_s (T v - v)(s) at the last sweep
    double gain_upper = 0.0;  // max_s (T v - v)(s)
    std::vector<double> h;    // differential values, h[reference] = 0
    std::vector<std::size_t> policy; // optimal action index per state
    double span_residual = 0.0;
    int iterations = 0;
    std::vector<double> span_history;
};

/// Anything exposing `num_states()` and `actions[s][a]` with `expected_reward`
/// and sparse `successors`.  ExplicitModel is the main instance.
template <typename M>
concept TabularModel = requires(const M& m, std::size_t s) {
    { m.num_states() } -> std::convertible_to<std::size_t>;
    { m.actions[s][0].expected_reward } -> std::convertible_to<double>;
    { m.actions[s][0].successors[0].next } -> std::convertible_to<std::size_t>;
    { m.actions[s][0].successors[0].prob } -> std::convertible_to<double>;
};

/// Minimal tabular model for hand-built chains.
struct SmallModel {
    std::vector<std::vector<ActionModel>> actions;
    std::size_t num_states() const { return actions.size(); }
};

namespace detail {
inline double q_value(const ActionModel& act, const std::vector<double>& v) {
    double acc = 0.0;
    for (const auto& t : act.successors) acc += t.prob * v[t.next];
    return act.expected_reward + acc;
}

inline bool improves(double candidate, double best) {
    return candidate > best + 1e-10 * std::max(1.0, std::abs(best));
}
} // namespace detail

/// Greedy action per state for the differential values `h`; ties go to the
/// lowest action index.
template <TabularModel Model>
std::vector<std::size_t> extract_policy(const Model& model, const std::vector<double>& h) {
    if (h.size() != model.num_states()) throw DomainError("value vector size does not match the model");
    std::vector<std::size_t> policy(model.num_states(), 0);
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (std::size_t a = 0; a < model.actions[s].size(); ++a) {
            const double q = detail::q_value(model.actions[s][a], h);
            if (a == 0 || detail::improves(q, best)) {
                best = q;
                policy[s] = a;
            }
        }
    }
    return policy;
}

/// max_s | max_u { g(s,u) - A + sum_s' P h(s') } - h(s) |
template <TabularModel Model>
double bellman_residual(const Model& model, double A, const std::vector<double>& h) {
    if (h.size() != model.num_states()) throw DomainError("value vector size does not match the model");
    double worst = 0.0;
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        double best = -std::numeric_limits<double>::infinity();
        for (const auto& act : model.actions[s]) best = std::max(best, detail::q_value(act, h));
        worst = std::max(worst, std::abs(best - A - h[s]));
    }
    return worst;
}

/// Relative value iteration
///   v_{l+1}(s) = max_u { g(s,u) + sum P v_l } - (same at the reference state)
/// stopped once span(T v_l - v_l) < tol.  A* is the midpoint of the gain
/// bounds min/max (T v_l - v_l), which bracket the optimal gain at every sweep.
template <TabularModel Model>
SolveResult solve_average_reward(const Model& model, const SolveOptions& opts = {}) {
    const std::size_t n = model.num_states();
    if (opts.tol <= 0) throw DomainError("tolerance must be positive");
    if (opts.reference >= n) throw DomainError("reference state out of range");
    if (!(opts.aperiodicity > 0.0 && opts.aperiodicity <= 1.0)) throw DomainError("aperiodicity must lie in (0, 1]");
    const double tau = opts.aperiodicity;

    SolveResult res;
    std::vector<double> v(n, 0.0), tv(n, 0.0);
    double span = std::numeric_limits<double>::infinity();
    for (int it = 1; it <= opts.max_iter; ++it) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (std::size_t s = 0; s < n; ++s) {
            double best = -std::numeric_limits<double>::infinity();
            for (const auto& act : model.actions[s]) {
                double acc = 0.0;
                for (const auto& t : act.successors) acc += t.prob * v[t.next];
                best = std::max(best, act.expected_reward + tau * acc);
            }
            tv[s] = best + (1.0 - tau) * v[s];
            lo = std::min(lo, tv[s] - v[s]);
            hi = std::max(hi, tv[s] - v[s]);
        }
        span = hi - lo;
        res.span_history.push_back(span);
        const double shift = tv[opts.reference];
        for (std::size_t s = 0; s < n; ++s) v[s] = tv[s] - shift;
        res.iterations = it;
        res.gain_lower = lo;
        res.gain_upper = hi;
        if (span < opts.tol) break;
    }
    res.span_residual = span;
    if (!(span < opts.tol)) {
        throw ConvergenceError(
            fmt::format("relative value iteration did not converge in {} sweeps (span {:.3e})", opts.max_iter, span),
            span);
    }
    res.A_star = 0.5 * (res.gain_lower + res.gain_upper);
    res.h.resize(n);
    for (std::size_t s = 0; s < n; ++s) res.h[s] = tau * v[s];
    res.policy = extract_policy(model, res.h);
    return res;
}

inline nlohmann::ordered_json to_json(const ExplicitModel& model, const SolveResult& res) {
    nlohmann::ordered_json out;
    out["A_star"] = res.A_star;
    out["gain_lower"] = res.gain_lower;
    out["gain_upper"] = res.gain_upper;
    out["span_residual"] = res.span_residual;
    out["iterations"] = res.iterations;
    auto& states = out["states"] = nlohmann::ordered_json::array();
    for (std::size_t s = 0; s < model.num_states(); ++s) {
        states.push_back({{"state", detail::state_label(model.space.state(s))},
                          {"h", res.h[s]},
                          {"action", detail::control_label(model.actions[s][res.policy[s]].control)}});
    }
    return out;
}

} // namespace cradm
