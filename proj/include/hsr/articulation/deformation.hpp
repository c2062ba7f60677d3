#pragma once

#include "hsr/articulation/lbs.hpp"
#include "hsr/articulation/mlp.hpp"
#include "hsr/articulation/skeleton.hpp"
#include "hsr/articulation/triplane.hpp"

#include <array>
#include <optional>
#include <vector>

namespace hsr {

/// Apply decoded non-rigid offsets to a canonical splat:
///   position += dx, log_scale += ds, rotation = normalize(q * (1, dq)),
/// opacity and SH untouched.
Gaussian apply_nonrigid(const Gaussian& g, const NonrigidDeltas& deltas);

/// The learned articulation stack: canonical feature field plus the decoders
/// for non-rigid offsets, LBS weight offsets, and (optionally used) color.
struct DeformationModel {
    TriplaneEncoder triplane;
    MlpDecoder nonrigid;   // feature -> 9
    MlpDecoder lbs_offset; // feature -> n_joints
    MlpDecoder color;      // feature -> 1 + sh_dim
    bool use_color_decoder = false;

    static DeformationModel create(int feature_dim, int grid_h, int grid_w, int sh_dim,
                                   int n_joints, const Vec3& box_lo, const Vec3& box_hi,
                                   std::uint64_t seed);
};

/// Everything needed to pose a canonical human cloud.
struct ArticulatedHuman {
    Skeleton skeleton;
    LbsWeightMatrix weights; // base from the rig; offsets baked or decoded
    std::optional<DeformationModel> model;
};

/// Intermediates kept by the articulated forward pass so gradients can be
/// chained back to canonical attributes and decoder parameters.
struct DeformCache {
    MatX features;                 // N x d
    MlpCache nonrigid_cache;
    MlpCache lbs_cache;
    MlpCache color_cache;
    MatX nonrigid_out;             // N x 9
    MatX effective_weights;        // N x n_joints
    MatX4 deformed_rotations;      // pre-normalization products q_c * (1, dq)
    MatX4 posed_rotation_products; // pre-normalization products r_q * q_d
    std::vector<Mat4> bones;
    std::vector<Vec4> blend_rotations; // polar rotation per splat, as quaternion
    bool used_decoders = false;
};

/// Pose a canonical cloud: non-rigid deformation (when a model is present)
/// followed by LBS with the effective weights. Returns a posed-space cloud.
GaussianCloud deform_cloud(const GaussianCloud& canonical, const ArticulatedHuman& human,
                           const PoseFrame& pose, DeformCache* cache = nullptr);

/// Gradients of the articulated forward pass, keyed like the cloud arrays.
struct DeformGrads {
    MatX3 d_positions;
    MatX4 d_rotations;
    MatX3 d_log_scales;
    VecX d_opacity_logits;
    MatX d_sh;
    MlpGrads d_nonrigid;
    MlpGrads d_lbs_offset;
    MlpGrads d_color;
    std::array<MatX, 3> d_planes;
};

/// Chain posed-space attribute gradients back through LBS, the non-rigid
/// offsets, and the triplane. The rotation factor of the blended bone matrix
/// is treated as locally constant with respect to the weights.
DeformGrads deform_backward(const GaussianCloud& canonical, const ArticulatedHuman& human,
                            const DeformCache& cache, const MatX3& g_positions,
                            const MatX4& g_rotations, const MatX3& g_log_scales,
                            const VecX& g_opacity, const MatX& g_sh);

/// Evaluate the decoders once and store their outputs: LBS logit offsets into
/// the weight matrix and (optionally) non-rigid offsets into the attributes.
/// After baking, posing no longer needs the triplane or decoders.
void bake_deformation(GaussianCloud& canonical, ArticulatedHuman& human);

} // namespace hsr
