#pragma once

#include "hsr/core/types.hpp"

namespace hsr {

/// Pinhole camera. world_to_camera maps world points into the camera frame
/// (right-handed, +z forward, image y down); pixels are (fx x/z + cx,
/// fy y/z + cy) with pixel (ix, iy) sampled at its center (ix+0.5, iy+0.5).
struct Camera {
    int width = 0, height = 0;
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat4 world_to_camera = Mat4::Identity();

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }
    Vec3 center() const { return -(rotation().transpose() * translation()); }

    void validate() const; // throws on non-positive focal length / bad rotation
};

/// Camera at `position` looking at `target`, world `up` as the vertical hint.
Camera make_lookat_camera(const Vec3& position, const Vec3& target, const Vec3& up, int width,
                          int height, double fx, double fy, double cx, double cy);

} // namespace hsr
