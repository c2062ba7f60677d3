#pragma once

#include "hsr/core/types.hpp"

#include <array>

namespace hsr {

/// Three orthogonal feature planes (xy, xz, yz). A query point is normalized
/// into the bounding box (clamped when outside, so the field is total),
/// bilinearly sampled on each plane, and the three d-vectors are summed.
class TriplaneEncoder {
public:
    TriplaneEncoder() = default;
    TriplaneEncoder(int h, int w, int d, const Vec3& box_lo, const Vec3& box_hi);

    int grid_h() const { return h_; }
    int grid_w() const { return w_; }
    int feature_dim() const { return d_; }
    const Vec3& box_lo() const { return lo_; }
    const Vec3& box_hi() const { return hi_; }

    /// Node features of plane p, (h*w) x d; row index = iy * w + ix.
    MatX& plane(int p) { return planes_[p]; }
    const MatX& plane(int p) const { return planes_[p]; }

    VecX query(const Vec3& x) const;
    MatX query_batch(const MatX3& points) const; // N x d

    /// Gradient of the feature with respect to the query point (d x 3).
    /// Piecewise constant in each cell; zero along clamped axes.
    MatX query_point_jacobian(const Vec3& x) const;

    /// Scatter an upstream feature gradient back onto the plane grids.
    void accumulate_feature_gradient(const Vec3& x, const VecX& upstream,
                                     std::array<MatX, 3>& plane_grads) const;

    std::array<MatX, 3> zero_plane_gradients() const;

private:
    struct Sample {
        int i00, i01, i10, i11; // row indices into the plane matrix
        double w00, w01, w10, w11;
        double fu, fv;  // fractional position inside the cell
        double dudp[3]; // du/dx, du/dy, du/dz of the column coordinate
        double dvdp[3];
    };
    Sample sample_plane(int p, const Vec3& x) const;

    int h_ = 0, w_ = 0, d_ = 0;
    Vec3 lo_ = Vec3::Zero(), hi_ = Vec3::Ones();
    std::array<MatX, 3> planes_;
};

} // namespace hsr
