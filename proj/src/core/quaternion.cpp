#include "hsr/core/quaternion.hpp"

#include <Eigen/Dense>

namespace hsr {

Eigen::Matrix<double, 4, 9> matrix_to_quat_jacobian(const Mat3& m) {
    using Jac = Eigen::Matrix<double, 4, 9>;
    Jac jac = Jac::Zero();
    const auto idx = [](int r, int c) { return 3 * r + c; };

    // Recompute the branch quantities exactly as the forward does.
    const double trace = m.trace();
    Vec4 q_pre;
    double s;
    int branch;
    if (trace > 0.0) {
        branch = 0;
        s = std::sqrt(trace + 1.0) * 2.0;
        q_pre << s / 4, (m(2, 1) - m(1, 2)) / s, (m(0, 2) - m(2, 0)) / s,
            (m(1, 0) - m(0, 1)) / s;
    } else if (m(0, 0) > m(1, 1) && m(0, 0) > m(2, 2)) {
        branch = 1;
        s = std::sqrt(1.0 + m(0, 0) - m(1, 1) - m(2, 2)) * 2.0;
        q_pre << (m(2, 1) - m(1, 2)) / s, s / 4, (m(0, 1) + m(1, 0)) / s,
            (m(0, 2) + m(2, 0)) / s;
    } else if (m(1, 1) > m(2, 2)) {
        branch = 2;
        s = std::sqrt(1.0 + m(1, 1) - m(0, 0) - m(2, 2)) * 2.0;
        q_pre << (m(0, 2) - m(2, 0)) / s, (m(0, 1) + m(1, 0)) / s, s / 4,
            (m(1, 2) + m(2, 1)) / s;
    } else {
        branch = 3;
        s = std::sqrt(1.0 + m(2, 2) - m(0, 0) - m(1, 1)) * 2.0;
        q_pre << (m(1, 0) - m(0, 1)) / s, (m(0, 2) + m(2, 0)) / s, (m(1, 2) + m(2, 1)) / s,
            s / 4;
    }

    // Per-branch data: diagonal signs entering t, the pivot component, and
    // the (a, b, sign) pairs building the remaining components.
    struct Comp {
        int row, a, b;
        double sign; // q_row = (m(a,b) + sign * m(b,a)) / s
    };
    int pivot;
    double dsign[3];
    Comp comps[3];
    switch (branch) {
        case 0:
            pivot = 0;
            dsign[0] = dsign[1] = dsign[2] = 1.0;
            comps[0] = {1, 2, 1, -1.0};
            comps[1] = {2, 0, 2, -1.0};
            comps[2] = {3, 1, 0, -1.0};
            break;
        case 1:
            pivot = 1;
            dsign[0] = 1.0;
            dsign[1] = dsign[2] = -1.0;
            comps[0] = {0, 2, 1, -1.0};
            comps[1] = {2, 0, 1, 1.0};
            comps[2] = {3, 0, 2, 1.0};
            break;
        case 2:
            pivot = 2;
            dsign[1] = 1.0;
            dsign[0] = dsign[2] = -1.0;
            comps[0] = {0, 0, 2, -1.0};
            comps[1] = {1, 0, 1, 1.0};
            comps[2] = {3, 1, 2, 1.0};
            break;
        default:
            pivot = 3;
            dsign[2] = 1.0;
            dsign[0] = dsign[1] = -1.0;
            comps[0] = {0, 1, 0, -1.0};
            comps[1] = {1, 0, 2, 1.0};
            comps[2] = {2, 1, 2, 1.0};
            break;
    }

    // ds/dm(d,d) = 2 * dsign[d] / s.
    for (int d = 0; d < 3; ++d) {
        const double ds = 2.0 * dsign[d] / s;
        jac(pivot, idx(d, d)) += 0.25 * ds;
        for (const Comp& c : comps)
            jac(c.row, idx(d, d)) += -q_pre[c.row] / s * ds;
    }
    for (const Comp& c : comps) {
        jac(c.row, idx(c.a, c.b)) += 1.0 / s;
        jac(c.row, idx(c.b, c.a)) += c.sign / s;
    }

    const double flip = q_pre[0] < 0.0 ? -1.0 : 1.0;
    return quat_normalize_jacobian<double>(flip * q_pre) * (flip * jac);
}

Mat3 polar_rotation_backward(const Mat3& a_lin, const Mat3& rot, const Mat3& g_rot) {
    // A = R S with S symmetric positive definite. For dA, the rotation
    // perturbation W = R^T dR (skew) solves W S + S W = R^T dA - dA^T R,
    // i.e. (tr(S) I - S) w = vex(R^T dA - dA^T R). Transposing that linear
    // relation gives the adjoint below.
    const Mat3 s = rot.transpose() * a_lin;
    const Mat3 p = rot.transpose() * g_rot;
    const Vec3 pv(p(2, 1) - p(1, 2), p(0, 2) - p(2, 0), p(1, 0) - p(0, 1));
    const Mat3 sys = s.trace() * Mat3::Identity() - s;
    const Vec3 mv = sys.fullPivLu().solve(pv);
    Mat3 skew;
    skew << 0, -mv.z(), mv.y(), mv.z(), 0, -mv.x(), -mv.y(), mv.x(), 0;
    return rot * skew;
}

} // namespace hsr
