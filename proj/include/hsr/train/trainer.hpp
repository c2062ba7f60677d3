#pragma once

#include "hsr/articulation/deformation.hpp"
#include "hsr/loss/losses.hpp"
#include "hsr/loss/metrics.hpp"
#include "hsr/render/renderer.hpp"
#include "hsr/train/adam.hpp"
#include "hsr/train/density.hpp"

#include <array>
#include <optional>
#include <vector>

namespace hsr {

struct LearningRates {
    double position = 1.6e-4;       // decays exponentially to position_final
    double position_final = 1.6e-6;
    double sh = 2.5e-3;
    double opacity = 5e-2;
    double scale = 1e-3;
    double rotation = 1e-3;
    double decoder = 1e-3; // decoders and triplane features
};

struct TrainConfig {
    int iterations = 10000;
    LearningRates lr;
    LossWeights loss;
    DensityConfig density;
    RenderOptions render;
    Vec3 background = Vec3::Zero();
    std::uint64_t seed = 0;
    std::optional<RegionSet> region_set;
    bool use_mask_loss = true;   // turned off for views that come without masks
    bool use_perceptual = true;
    int log_interval = 100;
    int divergence_limit = 10;   // consecutive non-finite losses before abort
    int sh_degree = 0;
    /// Rows [first, second) receive updates; everything else stays frozen.
    std::optional<std::pair<Index, Index>> trainable_range;

    int critique_max_rounds = 4;
    int critique_round_budget = 2000;
    int enhance_outer_e = 2;
    int enhance_inner_t = 2500;

    void validate() const;
};

/// One supervised view. The pose is present only for articulated subjects.
struct TrainView {
    Image image;
    std::optional<GrayImage> mask;
    Camera camera;
    std::optional<PoseFrame> pose;
};

/// Everything the optimizer mutates: the cloud and (optionally) the
/// articulation stack. A value type; snapshots are plain copies.
struct Reconstruction {
    GaussianCloud cloud;
    std::optional<ArticulatedHuman> human;
};

/// Optimizer moments and bookkeeping, persisted in checkpoints.
struct TrainState {
    AdamState positions, rotations, log_scales, opacity, sh;
    std::vector<AdamState> nonrigid_w, nonrigid_b;
    std::vector<AdamState> lbs_w, lbs_b;
    std::vector<AdamState> color_w, color_b;
    std::array<AdamState, 3> planes;
    GradAccumulator densify_acc;
    std::int64_t iteration = 0;
    int skipped_steps = 0;

    /// Allocate or re-validate shapes against the reconstruction.
    void ensure_shapes(const Reconstruction& rec);
};

struct LossBreakdownEntry {
    std::int64_t iteration = 0;
    double total = 0, l1 = 0, mask = 0, ssim = 0, perceptual = 0, region = 0;
    Index n_gaussians = 0;
};

struct TrainReport {
    std::vector<LossBreakdownEntry> series; // every log_interval iterations
    std::vector<double> loss_series;        // every iteration (determinism checks)
    Index final_gaussians = 0;
    double wall_seconds = 0;
    int skipped_steps = 0;
    Index densify_events = 0;
};

/// Gradient-descent reconstruction: sample view, deform when articulated,
/// render, evaluate the (optionally region-weighted) objective, backpropagate,
/// update with per-group adaptive moments, run density control on schedule.
/// Deterministic for a fixed seed. Throws DivergenceError after
/// divergence_limit consecutive non-finite losses.
TrainReport train(Reconstruction& rec, TrainState& state, const std::vector<TrainView>& views,
                  const TrainConfig& cfg);

/// Pure evaluation on held-out views: per-view and mean PSNR / SSIM /
/// perceptual distance.
EvalReport evaluate(const Reconstruction& rec, const std::vector<TrainView>& views,
                    const RenderOptions& render_opts, const Vec3& background,
                    const PerceptualBackend* backend);

} // namespace hsr
