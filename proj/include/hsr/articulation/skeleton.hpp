#pragma once

#include "hsr/core/quaternion.hpp"
#include "hsr/core/types.hpp"

#include <vector>

namespace hsr {

/// Joint hierarchy with rigid rest transforms. Parent indices form a forest
/// rooted at joint 0 (parent -1).
struct Skeleton {
    Eigen::VectorXi parent;            // per joint, -1 for root
    std::vector<Mat4> rest_local_transforms; // rigid, joint frame in parent frame
    VecX shape_params;                 // pass-through metadata

    int n_joints() const { return static_cast<int>(parent.size()); }

    /// Rest-pose joint-to-world transforms (hierarchy composition).
    std::vector<Mat4> rest_global_transforms() const;

    void validate() const; // throws PreconditionError on malformed hierarchies
};

/// One animation frame: per-joint rotations (unit quaternions, w x y z) and a
/// root translation.
struct PoseFrame {
    MatX4 joint_rotations; // n_joints x 4
    Vec3 root_translation = Vec3::Zero();
    double time = 0.0;

    static PoseFrame rest(int n_joints);
};

/// Per-joint transforms mapping rest-pose world coordinates to posed world
/// coordinates. Pose rotations act about each joint's rest frame and compose
/// hierarchically root to leaf; the root translation shifts every joint.
std::vector<Mat4> compute_bone_transforms(const Skeleton& skeleton, const PoseFrame& pose);

/// Small analytic test rig: 5 joints (pelvis, spine, head, two legs), pure
/// translation rest transforms. Ships so articulation is exercisable without
/// any third-party body-model assets.
Skeleton make_toy_biped();

/// Box geometry around each toy-biped bone plus per-vertex joint weights;
/// usable as input to sample_cloud_from_mesh.
struct RiggedMesh {
    MatX3 vertices;
    Eigen::Matrix<int, Eigen::Dynamic, 3> faces;
    MatX weights; // V x n_joints, rows on the simplex
};

RiggedMesh make_toy_biped_mesh();

} // namespace hsr
