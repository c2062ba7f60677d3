#pragma once

#include "hsr/core/gaussian.hpp"
#include "hsr/render/camera.hpp"

namespace hsr::testing {

/// Simple camera at the origin looking along +z.
inline Camera axis_camera(int width, int height, double focal) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal;
    cam.cx = width / 2.0;
    cam.cy = height / 2.0;
    return cam;
}

/// Random cloud placed in front of an axis_camera: depths in [depth_lo,
/// depth_hi], projections inside the image, moderate opacities, colors away
/// from the clamp boundaries so the render stays differentiable.
inline GaussianCloud random_front_cloud(Index n, int sh_degree, Rng& rng, int width, int height,
                                        double focal, double depth_lo = 0.8,
                                        double depth_hi = 2.0) {
    GaussianCloud cloud(n, sh_degree, SpaceTag::world);
    const int bands = sh_band_count(sh_degree);
    for (Index i = 0; i < n; ++i) {
        const double z = rng.uniform(depth_lo, depth_hi) + 1e-3 * static_cast<double>(i);
        const double px = rng.uniform(0.15, 0.85) * width;
        const double py = rng.uniform(0.15, 0.85) * height;
        cloud.positions.row(i) =
            Vec3((px - width / 2.0) * z / focal, (py - height / 2.0) * z / focal, z).transpose();
        cloud.rotations.row(i) = rng.unit_quaternion().transpose();
        const double base_scale = rng.uniform(0.02, 0.08) * z / focal * 16.0;
        cloud.log_scales.row(i) =
            Vec3(std::log(base_scale * rng.uniform(0.6, 1.6)),
                 std::log(base_scale * rng.uniform(0.6, 1.6)),
                 std::log(base_scale * rng.uniform(0.6, 1.6)))
                .transpose();
        cloud.opacity_logits[i] = rng.uniform(-1.2, 1.2);
        cloud.sh(i, 0 * bands) = rng.uniform(-1.0, 1.0);
        cloud.sh(i, 1 * bands) = rng.uniform(-1.0, 1.0);
        cloud.sh(i, 2 * bands) = rng.uniform(-1.0, 1.0);
        for (int c = 0; c < 3; ++c)
            for (int k = 1; k < bands; ++k) cloud.sh(i, c * bands + k) = rng.uniform(-0.15, 0.15);
    }
    return cloud;
}

/// A splat whose projection lands exactly on the given pixel center.
inline void place_at_pixel(GaussianCloud& cloud, Index i, const Camera& cam, double pix_x,
                           double pix_y, double depth) {
    cloud.positions.row(i) = Vec3((pix_x - cam.cx) * depth / cam.fx,
                                  (pix_y - cam.cy) * depth / cam.fy, depth)
                                 .transpose();
}

} // namespace hsr::testing
