#include "hsr/articulation/lbs.hpp"

#include "hsr/error.hpp"

#include <cmath>

namespace hsr {

namespace {
constexpr double kBaseEps = 1e-8;
}

LbsWeightMatrix LbsWeightMatrix::from_base(const MatX& base) {
    LbsWeightMatrix w;
    w.base_weights = base;
    w.learned_logit_offsets = MatX::Zero(base.rows(), base.cols());
    return w;
}

static VecX effective_row(const Eigen::RowVectorXd& base, const Eigen::RowVectorXd& offsets) {
    if ((base.array() < 0.0).any())
        throw PreconditionError("lbs_effective_weights: negative base weight");
    if (base.maxCoeff() <= 0.0)
        throw PreconditionError("lbs_effective_weights: all-zero base weight row");
    VecX logits = ((base.array() + kBaseEps).log() + offsets.array()).transpose();
    const double m = logits.maxCoeff();
    VecX e = (logits.array() - m).exp();
    return e / e.sum();
}

VecX lbs_effective_weights(const LbsWeightMatrix& w, Index row) {
    if (row < 0 || row >= w.size())
        throw PreconditionError("lbs_effective_weights: row out of range");
    return effective_row(w.base_weights.row(row), w.learned_logit_offsets.row(row));
}

MatX lbs_effective_weights_all(const LbsWeightMatrix& w) {
    MatX out(w.size(), w.n_joints());
    for (Index i = 0; i < w.size(); ++i)
        out.row(i) = effective_row(w.base_weights.row(i), w.learned_logit_offsets.row(i)).transpose();
    return out;
}

Vec3 lbs_transform(const Vec3& x, const VecX& weights, const std::vector<Mat4>& bones) {
    if (static_cast<size_t>(weights.size()) != bones.size())
        throw PreconditionError("lbs_transform: weight/bone count mismatch");
    if (std::abs(weights.sum() - 1.0) > 1e-6)
        throw PreconditionError("lbs_transform: weights must sum to 1");
    Vec3 out = Vec3::Zero();
    for (Index i = 0; i < weights.size(); ++i) {
        if (weights[i] == 0.0) continue;
        out += weights[i] * (bones[i].topLeftCorner<3, 3>() * x + bones[i].topRightCorner<3, 1>());
    }
    return out;
}

Mat4 lbs_blend_matrix(const VecX& weights, const std::vector<Mat4>& bones) {
    if (static_cast<size_t>(weights.size()) != bones.size())
        throw PreconditionError("lbs_blend_matrix: weight/bone count mismatch");
    Mat4 a = Mat4::Zero();
    for (Index i = 0; i < weights.size(); ++i) a += weights[i] * bones[i];
    return a;
}

Mat3 lbs_rotation_factor(const Mat4& blended) {
    const Mat3 linear = blended.topLeftCorner<3, 3>();
    if (linear.determinant() <= 0.0)
        throw PreconditionError("lbs_rotation_factor: degenerate blend (non-positive determinant)");
    Eigen::JacobiSVD<Mat3> svd(linear, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 r = svd.matrixU() * svd.matrixV().transpose();
    if (r.determinant() < 0.0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1.0;
        r = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    return r;
}

Gaussian lbs_transform_gaussian(const Gaussian& g, const VecX& weights,
                                const std::vector<Mat4>& bones) {
    const Mat4 a = lbs_blend_matrix(weights, bones);
    const Mat3 rot = lbs_rotation_factor(a);

    Gaussian out = g;
    out.position = a.topLeftCorner<3, 3>() * g.position + a.topRightCorner<3, 1>();
    out.rotation = quat_normalize<double>(
        quat_multiply<double>(matrix_to_quat<double>(rot), g.rotation));
    return out;
}

} // namespace hsr
