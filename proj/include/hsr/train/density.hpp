#pragma once

#include "hsr/core/gaussian.hpp"

#include <vector>

namespace hsr {

struct DensityConfig {
    int interval = 100;           // iterations between events; 0 disables
    double grad_threshold = 2e-4; // mean screen-space positional gradient
    double prune_opacity = 0.005; // activated opacity below this is removed
    Index max_gaussians = 100000;
    double percent_dense = 0.01;  // size boundary (x scene extent) for split vs clone
    double split_scale_shrink = 1.6;
    double until_fraction = 0.5;  // stop densifying after this fraction of training
};

/// Accumulates per-splat screen-gradient norms between density events.
struct GradAccumulator {
    VecX sum;
    VecX count;

    void resize(Index n) {
        sum = VecX::Zero(n);
        count = VecX::Zero(n);
    }
    void reset() {
        sum.setZero();
        count.setZero();
    }
    Index size() const { return sum.size(); }
};

struct DensityOutcome {
    /// For every row of the post-call cloud: the pre-call row it derives from
    /// (itself for survivors, the parent for clones and split children).
    std::vector<Index> source_row;
    /// True for rows created by this event; their optimizer moments restart
    /// from zero even though attributes derive from source_row.
    std::vector<bool> fresh_state;
    Index cloned = 0;
    Index split = 0;
    Index pruned = 0;
};

/// Clone small high-gradient splats, split large ones (two children sampled
/// from the parent, scale divided by split_scale_shrink, parent removed), and
/// prune low-opacity splats. Never exceeds max_gaussians. Deterministic given
/// the RNG state.
DensityOutcome densify_and_prune(GaussianCloud& cloud, const GradAccumulator& acc,
                                 const DensityConfig& cfg, double scene_extent, Rng& rng);

} // namespace hsr
