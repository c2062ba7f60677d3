#pragma once

// Synthetic reconstruction fixtures shared by the trainer tests and the
// acceptance suite.

#include "hsr/render/camera.hpp"
#include "hsr/train/trainer.hpp"

namespace hsr::testing {

/// Colorful ground-truth cloud inside a sphere of the given radius.
inline GaussianCloud make_blob_cloud(Index n, double radius, std::uint64_t seed,
                                     int sh_degree = 0) {
    Rng rng(seed);
    GaussianCloud cloud(n, sh_degree, SpaceTag::world);
    const int bands = sh_band_count(sh_degree);
    for (Index i = 0; i < n; ++i) {
        Vec3 p;
        do {
            p = rng.uniform_vec3(-radius, radius);
        } while (p.norm() > radius);
        cloud.positions.row(i) = p.transpose();
        cloud.rotations.row(i) = rng.unit_quaternion().transpose();
        const double s = rng.uniform(0.04, 0.09) * radius / 0.5;
        cloud.log_scales.row(i) = Vec3(std::log(s * rng.uniform(0.7, 1.4)),
                                       std::log(s * rng.uniform(0.7, 1.4)),
                                       std::log(s * rng.uniform(0.7, 1.4)))
                                      .transpose();
        cloud.opacity_logits[i] = rng.uniform(0.5, 2.5);
        for (int c = 0; c < 3; ++c) cloud.sh(i, c * bands) = rng.uniform(-1.2, 1.2);
    }
    return cloud;
}

/// Camera on a ring of the given radius looking at the origin.
inline Camera ring_camera(double azimuth, double radius, double height, int size,
                          double focal) {
    const Vec3 pos(radius * std::cos(azimuth), height, radius * std::sin(azimuth));
    return make_lookat_camera(pos, Vec3::Zero(), Vec3(0, 1, 0), size, size, focal, focal,
                              size / 2.0, size / 2.0);
}

struct SyntheticScene {
    GaussianCloud truth;
    std::vector<TrainView> train_views;
    std::vector<TrainView> heldout_views;
};

/// Render a ground-truth cloud from a камера ring; every view carries the
/// alpha map as its mask.
inline SyntheticScene make_synthetic_scene(Index n_gaussians, int n_train, int n_heldout,
                                           int size, std::uint64_t seed,
                                           const Vec3& background = Vec3::Zero()) {
    SyntheticScene scene;
    scene.truth = make_blob_cloud(n_gaussians, 0.5, seed);
    const double focal = size * 1.1;
    const int total = n_train + n_heldout;
    Rng rng(seed + 1);
    for (int k = 0; k < total; ++k) {
        const double az = 2.0 * M_PI * k / total;
        const double height = rng.uniform(-0.6, 0.9);
        const Camera cam = ring_camera(az, 2.1, height, size, focal);
        const RenderOutput out = render(scene.truth, cam, background);
        TrainView view;
        view.image = out.color;
        view.mask = out.alpha;
        view.camera = cam;
        if (k % (total / std::max(n_heldout, 1)) == 0 &&
            static_cast<int>(scene.heldout_views.size()) < n_heldout)
            scene.heldout_views.push_back(std::move(view));
        else
            scene.train_views.push_back(std::move(view));
    }
    return scene;
}

/// Jittered-position, neutral-color initialization derived from the truth
/// (stands in for an upstream point-cloud prior).
inline GaussianCloud make_init_cloud(const GaussianCloud& truth, double position_noise,
                                     std::uint64_t seed) {
    Rng rng(seed);
    GaussianCloud init(truth.size(), truth.sh_degree(), SpaceTag::world);
    for (Index i = 0; i < truth.size(); ++i) {
        init.positions.row(i) =
            truth.positions.row(i) + (position_noise * rng.normal_vec3()).transpose();
        init.log_scales.row(i).setConstant(std::log(0.05));
        init.opacity_logits[i] = logit(0.1);
    }
    return init;
}

} // namespace hsr::testing
