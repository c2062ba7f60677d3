#pragma once

#include "hsr/core/types.hpp"
#include "hsr/error.hpp"

#include <cmath>

namespace hsr {

// Quaternions are stored as 4-vectors in (w, x, y, z) order and multiplied
// with the Hamilton convention. Rotation offsets compose on the right:
// q' = q * (1, dq1, dq2, dq3), renormalized afterwards.

template <typename T>
Vec4T<T> quat_normalize(const Vec4T<T>& q) {
    const T n = q.norm();
    if (!(n > T(1e-12)))
        throw PreconditionError("quat_normalize: degenerate quaternion (near-zero norm)");
    return q / n;
}

template <typename T>
Vec4T<T> quat_conjugate(const Vec4T<T>& q) {
    return Vec4T<T>(q[0], -q[1], -q[2], -q[3]);
}

/// Hamilton product a * b in (w, x, y, z) component order.
template <typename T>
Vec4T<T> quat_multiply(const Vec4T<T>& a, const Vec4T<T>& b) {
    return Vec4T<T>(
        a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
        a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
        a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
        a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

/// Rotation matrix of a unit quaternion. Throws if |q| deviates from 1 by
/// more than 1e-6.
template <typename T>
Mat3T<T> quat_to_matrix(const Vec4T<T>& q) {
    if (std::abs(q.norm() - T(1)) > T(1e-6))
        throw PreconditionError("quat_to_matrix: quaternion is not unit length");
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3T<T> r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

/// Unit quaternion of a rotation matrix (Shepperd's method). The input must
/// be a proper rotation; the result has non-negative w.
template <typename T>
Vec4T<T> matrix_to_quat(const Mat3T<T>& m) {
    Vec4T<T> q;
    const T trace = m.trace();
    if (trace > T(0)) {
        T s = std::sqrt(trace + T(1)) * T(2);
        q << s / 4, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
            (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        T s = std::sqrt(T(1) + m(0, 0) - m(1, 1) - m(2, 2)) * T(2);
        q << (m(2, 1) - m(1, 2)) / s, s / 4, (m(0, 1) + m(1, 0)) / s,
            (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) > m(2, 2)) {
        T s = std::sqrt(T(1) + m(1, 1) - m(0, 0) - m(2, 2)) * T(2);
        q << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, s / 4,
            (m(1, 2) + m(2, 1)) / s;
    } else {
        T s = std::sqrt(T(1) + m(2, 2) - m(0, 0) - m(1, 1)) * T(2);
        q << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s,
            (m(1, 2) + m(2, 1)) / s, s / 4;
    }
    if (q[0] < T(0)) q = -q;
    return quat_normalize<T>(q);
}

/// Rotate a vector by a unit quaternion.
template <typename T>
Vec3T<T> quat_rotate(const Vec4T<T>& q, const Vec3T<T>& v) {
    return quat_to_matrix<T>(q) * v;
}

/// Matrix L with q * p == L(q) p (Hamilton product as a linear map of p).
template <typename T>
Eigen::Matrix<T, 4, 4> quat_left_matrix(const Vec4T<T>& q) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix<T, 4, 4> m;
    m << w, -x, -y, -z,
         x, w, -z, y,
         y, z, w, -x,
         z, -y, x, w;
    return m;
}

/// Matrix R with p * q == R(q) p.
template <typename T>
Eigen::Matrix<T, 4, 4> quat_right_matrix(const Vec4T<T>& q) {
    const T w = q[0], x = q[1], y = q[2], z = q[3];
    Eigen::Matrix<T, 4, 4> m;
    m << w, -x, -y, -z,
         x, w, z, -y,
         y, -z, w, x,
         z, y, -x, w;
    return m;
}

/// Jacobian of y = q / |q| with respect to q.
template <typename T>
Eigen::Matrix<T, 4, 4> quat_normalize_jacobian(const Vec4T<T>& q) {
    const T n = q.norm();
    const Vec4T<T> y = q / n;
    return (Eigen::Matrix<T, 4, 4>::Identity() - y * y.transpose()) / n;
}

/// Jacobian of matrix_to_quat: 4 x 9, columns indexed by m(r, c) flattened
/// row-major. Matches the forward branch selection, sign fix, and final
/// normalization.
Eigen::Matrix<double, 4, 9> matrix_to_quat_jacobian(const Mat3& m);

/// Adjoint of the polar decomposition's rotation factor: given the blended
/// linear map `a_lin`, its rotation factor `rot`, and an upstream gradient on
/// `rot`, returns the gradient with respect to `a_lin`.
Mat3 polar_rotation_backward(const Mat3& a_lin, const Mat3& rot, const Mat3& g_rot);

} // namespace hsr
