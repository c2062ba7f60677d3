#include "hsr/articulation/triplane.hpp"

#include "hsr/error.hpp"

#include <algorithm>
#include <cmath>

namespace hsr {

namespace {
// Plane axis pairs: first entry maps to columns (u), second to rows (v).
constexpr int kPlaneAxes[3][2] = {{0, 1}, {0, 2}, {1, 2}};
}

TriplaneEncoder::TriplaneEncoder(int h, int w, int d, const Vec3& box_lo, const Vec3& box_hi)
    : h_(h), w_(w), d_(d), lo_(box_lo), hi_(box_hi) {
    if (h < 2 || w < 2) throw PreconditionError("TriplaneEncoder: grid must be at least 2x2");
    if (d < 1) throw PreconditionError("TriplaneEncoder: feature dim must be >= 1");
    if (((hi_ - lo_).array() <= 0.0).any())
        throw PreconditionError("TriplaneEncoder: bounding box must have positive extent");
    for (auto& p : planes_) p = MatX::Zero(static_cast<Index>(h) * w, d);
}

TriplaneEncoder::Sample TriplaneEncoder::sample_plane(int p, const Vec3& x) const {
    const int au = kPlaneAxes[p][0], av = kPlaneAxes[p][1];

    const auto axis_coord = [&](int axis, double& scale) {
        const double span = hi_[axis] - lo_[axis];
        double t = (x[axis] - lo_[axis]) / span;
        scale = 1.0 / span;
        if (t <= 0.0) {
            t = 0.0;
            scale = 0.0; // clamped: no gradient through this axis
        } else if (t >= 1.0) {
            t = 1.0;
            scale = 0.0;
        }
        return t;
    };

    double su, sv;
    const double u = axis_coord(au, su) * (w_ - 1);
    const double v = axis_coord(av, sv) * (h_ - 1);

    int iu = std::min(static_cast<int>(std::floor(u)), w_ - 2);
    int iv = std::min(static_cast<int>(std::floor(v)), h_ - 2);
    const double fu = u - iu, fv = v - iv;

    Sample s{};
    s.i00 = iv * w_ + iu;
    s.i01 = iv * w_ + iu + 1;
    s.i10 = (iv + 1) * w_ + iu;
    s.i11 = (iv + 1) * w_ + iu + 1;
    s.w00 = (1 - fu) * (1 - fv);
    s.w01 = fu * (1 - fv);
    s.w10 = (1 - fu) * fv;
    s.w11 = fu * fv;
    s.fu = fu;
    s.fv = fv;
    for (int a = 0; a < 3; ++a) {
        s.dudp[a] = (a == au) ? su * (w_ - 1) : 0.0;
        s.dvdp[a] = (a == av) ? sv * (h_ - 1) : 0.0;
    }
    return s;
}

VecX TriplaneEncoder::query(const Vec3& x) const {
    VecX out = VecX::Zero(d_);
    for (int p = 0; p < 3; ++p) {
        const Sample s = sample_plane(p, x);
        const MatX& g = planes_[p];
        out += s.w00 * g.row(s.i00).transpose() + s.w01 * g.row(s.i01).transpose() +
               s.w10 * g.row(s.i10).transpose() + s.w11 * g.row(s.i11).transpose();
    }
    return out;
}

MatX TriplaneEncoder::query_batch(const MatX3& points) const {
    MatX out(points.rows(), d_);
    for (Index i = 0; i < points.rows(); ++i) out.row(i) = query(points.row(i)).transpose();
    return out;
}

MatX TriplaneEncoder::query_point_jacobian(const Vec3& x) const {
    MatX jac = MatX::Zero(d_, 3);
    for (int p = 0; p < 3; ++p) {
        const Sample s = sample_plane(p, x);
        const MatX& g = planes_[p];
        const VecX f00 = g.row(s.i00), f01 = g.row(s.i01), f10 = g.row(s.i10),
                   f11 = g.row(s.i11);
        const VecX dfu = (1 - s.fv) * (f01 - f00) + s.fv * (f11 - f10);
        const VecX dfv = (1 - s.fu) * (f10 - f00) + s.fu * (f11 - f01);
        for (int a = 0; a < 3; ++a)
            jac.col(a) += dfu * s.dudp[a] + dfv * s.dvdp[a];
    }
    return jac;
}

void TriplaneEncoder::accumulate_feature_gradient(const Vec3& x, const VecX& upstream,
                                                  std::array<MatX, 3>& plane_grads) const {
    for (int p = 0; p < 3; ++p) {
        const Sample s = sample_plane(p, x);
        plane_grads[p].row(s.i00) += s.w00 * upstream.transpose();
        plane_grads[p].row(s.i01) += s.w01 * upstream.transpose();
        plane_grads[p].row(s.i10) += s.w10 * upstream.transpose();
        plane_grads[p].row(s.i11) += s.w11 * upstream.transpose();
    }
}

std::array<MatX, 3> TriplaneEncoder::zero_plane_gradients() const {
    std::array<MatX, 3> grads;
    for (auto& g : grads) g = MatX::Zero(static_cast<Index>(h_) * w_, d_);
    return grads;
}

} // namespace hsr
