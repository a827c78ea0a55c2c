#pragma once

// Stationary control policies: channel allocators, threshold admission,
// greedy admission and table lookup of a solved policy.

#include <algorithm>
#include <memory>
#include <string>
#include <vector>

#include "cradm/model.hpp"
#include "cradm/random.hpp"
#include "cradm/solver.hpp"
#include "cradm/state_space.hpp"
#include "cradm/types.hpp"

namespace cradm {

class Policy {
public:
    virtual ~Policy() = default;
    virtual ControlDecision decide(const SystemState& state, const SystemParams& params, RandomStream& rng) const = 0;
    virtual std::string name() const = 0;
};

/// Serves classes from the oldest down; each class is filled before the next
/// younger one gets a channel.
inline std::vector<int> allocate_largest_delay_first(int m, const std::vector<int>& profile) {
    std::vector<int> serve(profile.size(), 0);
    for (std::size_t k = profile.size(); k-- > 0 && m > 0;) {
        serve[k] = std::min(m, profile[k]);
        m -= serve[k];
    }
    return serve;
}

inline std::vector<int> allocate_smallest_delay_first(int m, const std::vector<int>& profile) {
    std::vector<int> serve(profile.size(), 0);
    for (std::size_t k = 0; k < profile.size() && m > 0; ++k) {
        serve[k] = std::min(m, profile[k]);
        m -= serve[k];
    }
    return serve;
}

/// Uniformly random subset of min(m, population) users: picks users one at a
/// time without replacement, so every user has the same service probability.
inline std::vector<int> allocate_random(int m, const std::vector<int>& profile, RandomStream& rng) {
    std::vector<int> serve(profile.size(), 0);
    std::vector<int> left = profile;
    int remaining = 0;
    for (int n : left) remaining += n;
    for (int picks = std::min(m, remaining); picks > 0; --picks, --remaining) {
        int r = rng.uniform_int(0, remaining - 1);
        std::size_t k = 0;
        while (r >= left[k]) r -= left[k++];
        --left[k];
        ++serve[k];
    }
    return serve;
}

enum class Allocator { LargestDelayFirst, SmallestDelayFirst, Random };

inline std::string to_string(Allocator a) {
    switch (a) {
    case Allocator::LargestDelayFirst: return "ldf";
    case Allocator::SmallestDelayFirst: return "sdf";
    case Allocator::Random: return "random";
    }
    return "?";
}

inline std::vector<int> allocate(Allocator a, int m, const std::vector<int>& profile, RandomStream& rng) {
    switch (a) {
    case Allocator::LargestDelayFirst: return allocate_largest_delay_first(m, profile);
    case Allocator::SmallestDelayFirst: return allocate_smallest_delay_first(m, profile);
    case Allocator::Random: return allocate_random(m, profile, rng);
    }
    return allocate_largest_delay_first(m, profile);
}

/// Admits up to `threshold` total users (at most J per slot), then allocates.
class ThresholdPolicy final : public Policy {
public:
    explicit ThresholdPolicy(int threshold, Allocator allocator = Allocator::LargestDelayFirst)
        : threshold_(threshold), allocator_(allocator) {
        if (threshold < 0) throw DomainError("threshold must be non-negative");
    }

    ControlDecision decide(const SystemState& state, const SystemParams& params, RandomStream& rng) const override {
        const int pop = state.population();
        const int limit = std::min(threshold_, params.population_cap);
        const int admit = std::clamp(limit - pop, 0, params.channels);
        return {admit, allocate(allocator_, state.available, admitted_profile(state, admit), rng)};
    }

    std::string name() const override { return "threshold-" + to_string(allocator_); }
    int threshold() const { return threshold_; }
    Allocator allocator() const { return allocator_; }

private:
    int threshold_;
    Allocator allocator_;
};

/// Fills every available channel: admits max(0, m - population), capped at J.
class GreedyPolicy final : public Policy {
public:
    explicit GreedyPolicy(Allocator allocator = Allocator::LargestDelayFirst) : allocator_(allocator) {}

    ControlDecision decide(const SystemState& state, const SystemParams& params, RandomStream& rng) const override {
        const int pop = state.population();
        const int admit = std::min({std::max(0, state.available - pop), params.channels, params.population_cap - pop});
        return {admit, allocate(allocator_, state.available, admitted_profile(state, admit), rng)};
    }

    std::string name() const override { return "greedy"; }

private:
    Allocator allocator_;
};

/// Never admits; serves whoever is present largest-delay-first.
class NullPolicy final : public Policy {
public:
    ControlDecision decide(const SystemState& state, const SystemParams&, RandomStream&) const override {
        return {0, allocate_largest_delay_first(state.available, state.delay_profile)};
    }
    std::string name() const override { return "null"; }
};

/// Plays a solved policy by table lookup.  Holds a copy of the state indexing
/// and of the chosen decision per state.
class TabularPolicy final : public Policy {
public:
    TabularPolicy(const ExplicitModel& model, const std::vector<std::size_t>& action_per_state)
        : space_(model.space) {
        decisions_.reserve(model.num_states());
        for (std::size_t s = 0; s < model.num_states(); ++s)
            decisions_.push_back(model.actions[s].at(action_per_state.at(s)).control);
    }

    ControlDecision decide(const SystemState& state, const SystemParams&, RandomStream&) const override {
        return decisions_.at(space_.index(state));
    }
    std::string name() const override { return "optimal"; }

private:
    StateSpace space_;
    std::vector<ControlDecision> decisions_;
};

inline std::unique_ptr<Policy> threshold_heuristic_policy(int threshold,
                                                          Allocator allocator = Allocator::LargestDelayFirst) {
    return std::make_unique<ThresholdPolicy>(threshold, allocator);
}

inline std::unique_ptr<Policy> greedy_policy() { return std::make_unique<GreedyPolicy>(); }

} // namespace cradm
