#pragma once

#include <cstdint>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

namespace cradm {

// Error taxonomy shared by every module.  The CLI maps these onto exit codes.
struct DomainError : std::domain_error {
    using std::domain_error::domain_error;
};

// A caller broke a documented precondition (infeasible control, completions
// exceeding service, ...).
struct ContractViolation : std::logic_error {
    using std::logic_error::logic_error;
};

struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConvergenceError : std::runtime_error {
    ConvergenceError(const std::string& what, double span)
        : std::runtime_error(what), last_span(span) {}
    double last_span;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Model constants of the overlay network.
///
/// Channels are homogeneous two-state Markov chains.  `p_stay_on` is the
/// probability that an available channel is still available next slot and
/// `q_stay_off` the probability that an occupied channel stays occupied.
struct SystemParams {
    int channels = 1;             // J
    double p_stay_on = 0.5;
    double q_stay_off = 0.5;
    int max_delay = 0;            // D_max
    double p_finish = 0.0;        // per-slot completion probability of a served user
    double reward_completion = 0; // R_c
    double reward_per_slot = 0;   // R_t, per maintained user
    double penalty_drop = 0;      // C_q, per forced termination
    int population_cap = 1;       // N_cap

    int delay_classes() const { return max_delay + 1; }

    void validate() const {
        auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
        if (channels < 1) throw DomainError("channels (J) must be >= 1");
        if (max_delay < 0) throw DomainError("max_delay (D_max) must be >= 0");
        if (population_cap < 1) throw DomainError("population_cap (N_cap) must be >= 1");
        if (!prob(p_stay_on) || !prob(q_stay_off) || !prob(p_finish))
            throw DomainError("probabilities must lie in [0, 1]");
        if (reward_completion < 0 || reward_per_slot < 0 || penalty_drop < 0)
            throw DomainError("R_c, R_t and C_q must be non-negative");
    }

    friend bool operator==(const SystemParams&, const SystemParams&) = default;
};

inline int default_population_cap(int channels, int max_delay) {
    return channels * (max_delay + 1);
}

/// Channel count plus users per accumulated-delay class, observed at the
/// start of a slot after sensing.
struct SystemState {
    int available = 0;              // m
    std::vector<int> delay_profile; // omega_e, one entry per delay class

    int population() const {
        return std::accumulate(delay_profile.begin(), delay_profile.end(), 0);
    }

    static SystemState empty(const SystemParams& params, int available = 0) {
        return {available, std::vector<int>(params.delay_classes(), 0)};
    }

    friend bool operator==(const SystemState&, const SystemState&) = default;
};

/// Admissions plus the number of users served in each delay class.
struct ControlDecision {
    int admit = 0;          // u_a
    std::vector<int> serve; // u_e

    int served() const { return std::accumulate(serve.begin(), serve.end(), 0); }

    static ControlDecision idle(const SystemParams& params) {
        return {0, std::vector<int>(params.delay_classes(), 0)};
    }

    friend bool operator==(const ControlDecision&, const ControlDecision&) = default;
};

struct SlotOutcome {
    std::vector<int> completions; // omega_c per delay class
    int drops = 0;                // omega_q
    int maintained = 0;           // population during the slot, after admission
    double revenue = 0.0;
    SystemState next_state;
};

inline std::ostream& operator<<(std::ostream& os, const std::vector<int>& v) {
    os << '(';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
    return os << ')';
}

inline std::ostream& operator<<(std::ostream& os, const SystemState& s) {
    return os << '{' << s.available << ',' << s.delay_profile << '}';
}

inline std::ostream& operator<<(std::ostream& os, const ControlDecision& u) {
    return os << '{' << u.admit << ',' << u.serve << '}';
}

inline void check_state(const SystemState& s, const SystemParams& params) {
    if (s.available < 0 || s.available > params.channels)
        throw DomainError("channel count out of range [0, J]");
    if (static_cast<int>(s.delay_profile.size()) != params.delay_classes())
        throw DomainError("delay profile must have D_max + 1 entries");
    for (int n : s.delay_profile)
        if (n < 0) throw DomainError("negative user count in delay profile");
    if (s.population() > params.population_cap)
        throw DomainError("population exceeds N_cap");
}

} // namespace cradm
