#include "hsr/render/camera.hpp"

#include "hsr/error.hpp"

namespace hsr {

void Camera::validate() const {
    if (width < 1 || height < 1) throw PreconditionError("Camera: image size must be positive");
    if (!(fx > 0.0) || !(fy > 0.0))
        throw PreconditionError("Camera: focal lengths must be positive");
    const Mat3 r = rotation();
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
        throw PreconditionError("Camera: world_to_camera rotation is not orthonormal");
}

Camera make_lookat_camera(const Vec3& position, const Vec3& target, const Vec3& up, int width,
                          int height, double fx, double fy, double cx, double cy) {
    Vec3 forward = target - position;
    if (forward.norm() < 1e-12)
        throw PreconditionError("make_lookat_camera: position equals target");
    forward.normalize();
    Vec3 vertical = up;
    if (forward.cross(vertical).norm() < 1e-9) vertical = Vec3(1, 0, 0); // gaze along up
    const Vec3 right = forward.cross(vertical).normalized();
    const Vec3 down = forward.cross(right); // image y grows downward

    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.world_to_camera = Mat4::Identity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -(r * position);
    cam.validate();
    return cam;
}

} // namespace hsr
