#include "hsr/articulation/deformation.hpp"

#include "hsr/error.hpp"

namespace hsr {

Gaussian apply_nonrigid(const Gaussian& g, const NonrigidDeltas& deltas) {
    Gaussian out = g;
    out.position = g.position + deltas.d_position;
    out.log_scale = g.log_scale + deltas.d_log_scale; // s_d = s_c * exp(ds)
    const Vec4 offset(1.0, deltas.d_rotation[0], deltas.d_rotation[1], deltas.d_rotation[2]);
    out.rotation = quat_normalize<double>(quat_multiply<double>(g.rotation, offset));
    return out;
}

DeformationModel DeformationModel::create(int feature_dim, int grid_h, int grid_w, int sh_dim,
                                          int n_joints, const Vec3& box_lo, const Vec3& box_hi,
                                          std::uint64_t seed) {
    DeformationModel m;
    m.triplane = TriplaneEncoder(grid_h, grid_w, feature_dim, box_lo, box_hi);
    m.nonrigid = make_nonrigid_decoder(feature_dim, seed);
    m.lbs_offset = make_lbs_offset_decoder(feature_dim, n_joints, seed + 1);
    m.color = make_color_decoder(feature_dim, sh_dim, seed + 2);
    return m;
}

GaussianCloud deform_cloud(const GaussianCloud& canonical, const ArticulatedHuman& human,
                           const PoseFrame& pose, DeformCache* cache) {
    canonical.validate();
    const Index n = canonical.size();
    if (human.weights.size() != n)
        throw PreconditionError("deform_cloud: weight matrix row count does not match cloud");
    if (human.weights.n_joints() != human.skeleton.n_joints())
        throw PreconditionError("deform_cloud: weight matrix joint count does not match skeleton");

    const std::vector<Mat4> bones = compute_bone_transforms(human.skeleton, pose);

    DeformCache local;
    DeformCache& c = cache ? *cache : local;
    c.bones = bones;
    c.used_decoders = human.model.has_value();
    c.deformed_rotations.resize(n, 4);
    c.posed_rotation_products.resize(n, 4);
    c.blend_rotations.resize(n);

    GaussianCloud out = canonical;
    out.space = SpaceTag::posed;

    LbsWeightMatrix weights = human.weights;
    if (human.model) {
        const DeformationModel& model = *human.model;
        c.features = model.triplane.query_batch(canonical.positions);
        c.nonrigid_out = mlp_forward(model.nonrigid, c.features, &c.nonrigid_cache);
        if (c.nonrigid_out.cols() != 9)
            throw PreconditionError("deform_cloud: non-rigid decoder output width must be 9");
        weights.learned_logit_offsets = mlp_forward(model.lbs_offset, c.features, &c.lbs_cache);
        if (weights.learned_logit_offsets.cols() != weights.n_joints())
            throw PreconditionError("deform_cloud: LBS offset decoder width mismatch");
        if (model.use_color_decoder) {
            const MatX col = mlp_forward(model.color, c.features, &c.color_cache);
            if (col.cols() != 1 + canonical.sh.cols())
                throw PreconditionError("deform_cloud: color decoder width mismatch");
            out.opacity_logits = col.col(0);
            out.sh = col.rightCols(col.cols() - 1);
        }
    } else {
        c.nonrigid_out = MatX::Zero(n, 9);
    }

    c.effective_weights = lbs_effective_weights_all(weights);

    for (Index i = 0; i < n; ++i) {
        // Non-rigid offsets (zero rows when no model is attached).
        const Vec3 dx = c.nonrigid_out.row(i).segment<3>(0);
        const Vec3 ds = c.nonrigid_out.row(i).segment<3>(3);
        const Vec4 offset(1.0, c.nonrigid_out(i, 6), c.nonrigid_out(i, 7), c.nonrigid_out(i, 8));

        const Vec3 x_d = Vec3(canonical.positions.row(i)) + dx;
        const Vec3 s_d = Vec3(canonical.log_scales.row(i)) + ds;
        const Vec4 k = quat_multiply<double>(Vec4(canonical.rotations.row(i)), offset);
        c.deformed_rotations.row(i) = k;
        const Vec4 q_d = quat_normalize<double>(k);

        const VecX w = c.effective_weights.row(i);
        const Mat4 a = lbs_blend_matrix(w, bones);
        const Mat3 rot = lbs_rotation_factor(a);
        const Vec4 r_q = matrix_to_quat<double>(rot);
        c.blend_rotations[i] = r_q;

        out.positions.row(i) = (a.topLeftCorner<3, 3>() * x_d + a.topRightCorner<3, 1>());
        const Vec4 m = quat_multiply<double>(r_q, q_d);
        c.posed_rotation_products.row(i) = m;
        out.rotations.row(i) = quat_normalize<double>(m);
        out.log_scales.row(i) = s_d;
    }
    return out;
}

DeformGrads deform_backward(const GaussianCloud& canonical, const ArticulatedHuman& human,
                            const DeformCache& cache, const MatX3& g_positions,
                            const MatX4& g_rotations, const MatX3& g_log_scales,
                            const VecX& g_opacity, const MatX& g_sh) {
    const Index n = canonical.size();
    const int nj = human.skeleton.n_joints();
    const bool decoders = cache.used_decoders && human.model.has_value();
    const bool color_dec = decoders && human.model->use_color_decoder;

    DeformGrads g;
    g.d_positions = MatX3::Zero(n, 3);
    g.d_rotations = MatX4::Zero(n, 4);
    g.d_log_scales = g_log_scales; // s_d = s_c + ds passes straight through
    g.d_opacity_logits = color_dec ? VecX(VecX::Zero(n)) : g_opacity;
    g.d_sh = color_dec ? MatX(MatX::Zero(n, canonical.sh.cols())) : g_sh;

    MatX nonrigid_upstream = MatX::Zero(n, 9);
    MatX lbs_upstream = MatX::Zero(n, nj);
    MatX color_upstream;
    if (color_dec) color_upstream = MatX::Zero(n, 1 + canonical.sh.cols());

    for (Index i = 0; i < n; ++i) {
        const VecX w = cache.effective_weights.row(i);
        const Mat4 a = lbs_blend_matrix(w, cache.bones);
        const Vec3 dx = cache.nonrigid_out.row(i).segment<3>(0);
        const Vec3 x_d = Vec3(canonical.positions.row(i)) + dx;

        // Position path: x_p = A_lin x_d + a_t.
        const Vec3 gx_p = g_positions.row(i);
        const Vec3 gx_d = a.topLeftCorner<3, 3>().transpose() * gx_p;
        g.d_positions.row(i) += gx_d.transpose();
        nonrigid_upstream.row(i).segment<3>(0) = gx_d.transpose();

        // Rotation path: q_p = normalize(L(r_q) q_d), q_d = normalize(q_c * u).
        const Vec4 m = cache.posed_rotation_products.row(i);
        const Vec4 k = cache.deformed_rotations.row(i);
        const Vec4 q_c = canonical.rotations.row(i);
        const Vec4 u(1.0, cache.nonrigid_out(i, 6), cache.nonrigid_out(i, 7),
                     cache.nonrigid_out(i, 8));
        const Vec4 gq_p = g_rotations.row(i);
        const Vec4 g_m = quat_normalize_jacobian<double>(m).transpose() * gq_p;
        const Vec4 g_qd = quat_left_matrix<double>(cache.blend_rotations[i]).transpose() * g_m;
        const Vec4 g_k = quat_normalize_jacobian<double>(k).transpose() * g_qd;
        g.d_rotations.row(i) += (quat_right_matrix<double>(u).transpose() * g_k).transpose();
        const Vec4 g_u = quat_left_matrix<double>(q_c).transpose() * g_k;
        nonrigid_upstream.row(i).segment<3>(6) = g_u.tail<3>().transpose();

        // The blend's rotation factor also depends on the weights:
        // r_q = quat(polar(A)). Chain g_m -> r_q -> A.
        const Vec4 q_d = quat_normalize<double>(k);
        const Vec4 g_rq = quat_right_matrix<double>(q_d).transpose() * g_m;
        const Mat3 rot = lbs_rotation_factor(a);
        const Eigen::Matrix<double, 9, 1> g_rot_vec =
            matrix_to_quat_jacobian(rot).transpose() * g_rq;
        Mat3 g_rot;
        for (int r = 0; r < 3; ++r)
            for (int col = 0; col < 3; ++col) g_rot(r, col) = g_rot_vec[3 * r + col];
        const Mat3 g_a_rot = polar_rotation_backward(a.topLeftCorner<3, 3>(), rot, g_rot);

        // Skinning-weight path through the blended matrix (position and
        // rotation-factor contributions).
        VecX gw = VecX::Zero(nj);
        for (int j = 0; j < nj; ++j) {
            const Mat4& b = cache.bones[j];
            gw[j] = gx_p.dot(b.topLeftCorner<3, 3>() * x_d + b.topRightCorner<3, 1>()) +
                    (g_a_rot.array() * b.topLeftCorner<3, 3>().array()).sum();
        }
        // Softmax Jacobian: g_logits = w .* (gw - dot(w, gw)).
        const double inner = w.dot(gw);
        const VecX g_logits = w.array() * (gw.array() - inner);
        lbs_upstream.row(i) = g_logits.transpose();

        nonrigid_upstream.row(i).segment<3>(3) = g_log_scales.row(i);
    }

    if (decoders) {
        const DeformationModel& model = *human.model;
        g.d_nonrigid = MlpGrads::zero_like(model.nonrigid);
        g.d_lbs_offset = MlpGrads::zero_like(model.lbs_offset);
        MatX g_features =
            mlp_backward(model.nonrigid, cache.nonrigid_cache, nonrigid_upstream, &g.d_nonrigid);
        g_features +=
            mlp_backward(model.lbs_offset, cache.lbs_cache, lbs_upstream, &g.d_lbs_offset);
        if (color_dec) {
            color_upstream.col(0) = g_opacity;
            color_upstream.rightCols(canonical.sh.cols()) = g_sh;
            g.d_color = MlpGrads::zero_like(model.color);
            g_features += mlp_backward(model.color, cache.color_cache, color_upstream, &g.d_color);
        }
        g.d_planes = model.triplane.zero_plane_gradients();
        for (Index i = 0; i < n; ++i) {
            const Vec3 x = canonical.positions.row(i);
            const VecX gf = g_features.row(i);
            model.triplane.accumulate_feature_gradient(x, gf, g.d_planes);
            g.d_positions.row(i) +=
                (model.triplane.query_point_jacobian(x).transpose() * gf).transpose();
        }
    }
    return g;
}

void bake_deformation(GaussianCloud& canonical, ArticulatedHuman& human) {
    if (!human.model) return;
    const DeformationModel& model = *human.model;
    const MatX features = model.triplane.query_batch(canonical.positions);
    human.weights.learned_logit_offsets = mlp_forward(model.lbs_offset, features);

    const MatX deltas = mlp_forward(model.nonrigid, features);
    MatX color;
    if (model.use_color_decoder) color = mlp_forward(model.color, features);

    for (Index i = 0; i < canonical.size(); ++i) {
        Gaussian g = canonical.get(i);
        NonrigidDeltas d;
        d.d_position = deltas.row(i).segment<3>(0);
        d.d_log_scale = deltas.row(i).segment<3>(3);
        d.d_rotation = deltas.row(i).segment<3>(6);
        g = apply_nonrigid(g, d);
        if (model.use_color_decoder) {
            g.opacity_logit = color(i, 0);
            g.sh = color.row(i).tail(color.cols() - 1);
        }
        canonical.set(i, g);
    }
    canonical.space = SpaceTag::deformed;
    human.model.reset();
}

} // namespace hsr
