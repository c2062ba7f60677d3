#pragma once

#include "hsr/articulation/skeleton.hpp"
#include "hsr/core/gaussian.hpp"

#include <vector>

namespace hsr {

/// Skinning weights for N splats over n_joints joints. Base weights come from
/// the rigged template; the learned logit offsets are decoder output and
/// shift the effective distribution without ever leaving the simplex.
struct LbsWeightMatrix {
    MatX base_weights;         // N x n_joints, non-negative
    MatX learned_logit_offsets; // N x n_joints

    Index size() const { return base_weights.rows(); }
    int n_joints() const { return static_cast<int>(base_weights.cols()); }

    static LbsWeightMatrix from_base(const MatX& base);
};

/// Effective weights for one splat: softmax(log(base + 1e-8) + offsets).
/// Sums to 1, non-negative; equals the normalized base row when offsets are
/// zero. Throws on an all-zero or negative base row.
VecX lbs_effective_weights(const LbsWeightMatrix& w, Index row);

/// All effective weight rows at once (N x n_joints).
MatX lbs_effective_weights_all(const LbsWeightMatrix& w);

/// Weighted bone transform of a point: sum_i w_i * (B_i x).
Vec3 lbs_transform(const Vec3& x, const VecX& weights, const std::vector<Mat4>& bones);

/// Blend the bone transforms themselves: A = sum_i w_i B_i (4 x 4).
Mat4 lbs_blend_matrix(const VecX& weights, const std::vector<Mat4>& bones);

/// Rotation factor of the blended matrix via polar decomposition; throws a
/// degenerate-blend error when det(A_linear) <= 0.
Mat3 lbs_rotation_factor(const Mat4& blended);

/// Transform a full splat: position through the weighted sum, rotation
/// left-multiplied by the blend's rotation factor, scale/opacity/SH kept.
Gaussian lbs_transform_gaussian(const Gaussian& g, const VecX& weights,
                                const std::vector<Mat4>& bones);

} // namespace hsr
