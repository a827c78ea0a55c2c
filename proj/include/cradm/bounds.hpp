#pragma once

// Revenue boundary: the largest expected segment revenue over all channel
// states starting from an empty system, an upper bound on the long-run
// average revenue of any policy.

#include <cstdint>
#include <vector>

#include "cradm/rollout.hpp"

namespace cradm {

struct BoundaryResult {
    double G_bound = 0.0;
    int argmax_m = 0;
    int argmax_N = 0;
    double std_err = 0.0;
    std::vector<SegmentEstimate> grid; // every evaluated (m, N) point
};

/// For each m in [0, J], climbs N from 0 on theta = {m, no users} with the
/// same guarded stopping rule as the rollout search, then takes the best
/// estimate over all evaluated points.  Channel state m uses the sub-stream
/// `base.derive(m)`.
inline BoundaryResult revenue_boundary(const SystemParams& params, const SearchOptions& opts, const RandomStream& base) {
    BoundaryResult out;
    bool first = true;
    for (int m = 0; m <= params.channels; ++m) {
        const auto theta = SystemState::empty(params, m);
        auto search = search_optimal_threshold(theta, params, opts, base.derive(static_cast<std::uint64_t>(m)));
        for (auto& est : search.estimates) {
            if (first || est.mean_g_bar > out.G_bound) {
                first = false;
                out.G_bound = est.mean_g_bar;
                out.argmax_m = m;
                out.argmax_N = est.N_th;
                out.std_err = est.std_err;
            }
            out.grid.push_back(std::move(est));
        }
    }
    return out;
}

} // namespace cradm
