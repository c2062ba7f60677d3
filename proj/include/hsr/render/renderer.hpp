#pragma once

#include "hsr/core/gaussian.hpp"
#include "hsr/render/camera.hpp"

#include <cstdint>
#include <vector>

namespace hsr {

struct RenderOptions {
    double near_plane = 0.01;
    double cov2d_dilation = 0.3; // px^2 isotropic dilation of the 2D covariance
    double alpha_clamp = 0.99;
    double cutoff_sigma = 3.0;              // Mahalanobis support cutoff; <= 0 disables
    double early_stop_transmittance = 1e-4; // per-pixel early termination; <= 0 disables
    int tile_size = 16;
    int num_threads = 1;
    bool with_depth = false;
};

/// Result of projecting one splat. `culled` is a signal, not an error.
struct ProjectedGaussian {
    Vec2 mean2d = Vec2::Zero();
    Mat2 cov2d = Mat2::Zero();
    double depth = 0.0;
    bool culled = false;
};

ProjectedGaussian project_gaussian(const Gaussian& g, const Camera& cam,
                                   const RenderOptions& opts = {});

struct RenderOutput {
    Image color;     // H x W x 3 in [0, 1]
    GrayImage alpha; // H x W in [0, 1]; the differentiable density map
    GrayImage depth; // H x W, optional diagnostic (alpha-weighted mean depth)
};

/// Stable ascending depth order; ties broken by ascending index.
std::vector<int> depth_sort(const std::vector<double>& depths);

/// Forward state kept for the backward pass.
struct RenderCache {
    struct Splat {
        Vec2 mean2d;
        Mat2 cov2d;
        Mat2 cov2d_inv;
        double depth;
        Vec3 color;
        double opacity;
        bool culled;
    };
    std::vector<Splat> splats;
    std::vector<int> order;                   // depth-sorted visible indices
    std::vector<std::vector<int>> tile_lists; // per tile, depth-ordered
    GrayImage transmittance;                  // final T per pixel
    int tiles_x = 0, tiles_y = 0;
    int width = 0, height = 0;
    Vec3 background = Vec3::Zero();
    RenderOptions options;
    std::uint64_t cloud_fingerprint = 0;
    bool valid = false;
};

/// Tiled front-to-back alpha compositing. Deterministic for fixed inputs
/// regardless of num_threads (tiles write disjoint pixels).
RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                    const RenderOptions& opts = {}, RenderCache* cache = nullptr);

/// Oracle renderer: per pixel, walk every depth-sorted splat; no tiling, no
/// early termination. Same cutoff contract as render().
RenderOutput render_naive(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                          const RenderOptions& opts = {});

/// Per-splat attribute gradients, keyed like the cloud arrays.
/// screen_grad_norm carries the 2D mean-gradient magnitude used by adaptive
/// density control.
struct CloudGrads {
    MatX3 d_positions;
    MatX4 d_rotations;
    MatX3 d_log_scales;
    VecX d_opacity_logits;
    MatX d_sh;
    VecX screen_grad_norm;

    static CloudGrads zero(Index n, int sh_dim);
    void add(const CloudGrads& other);
    bool all_finite() const;
};

/// Analytic gradients of render() with respect to every splat attribute.
/// Requires the cache produced by the matching forward call; throws if the
/// cloud changed since (stale cache).
CloudGrads render_backward(const GaussianCloud& cloud, const Camera& cam,
                           const Image& grad_color, const GrayImage& grad_alpha,
                           const RenderCache& cache);

/// Fingerprint of a cloud's attribute bytes (cache staleness checks).
std::uint64_t cloud_fingerprint(const GaussianCloud& cloud);

} // namespace hsr
