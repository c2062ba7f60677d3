#include "hsr/articulation/skeleton.hpp"

#include "hsr/error.hpp"

namespace hsr {

void Skeleton::validate() const {
    const int n = n_joints();
    if (n < 1) throw PreconditionError("Skeleton: needs at least one joint");
    if (static_cast<int>(rest_local_transforms.size()) != n)
        throw PreconditionError("Skeleton: rest transform count does not match joint count");
    for (int j = 0; j < n; ++j) {
        if (parent[j] >= j)
            throw PreconditionError("Skeleton: parents must precede children");
        if (parent[j] < -1)
            throw PreconditionError("Skeleton: invalid parent index");
        const Mat3 r = rest_local_transforms[j].topLeftCorner<3, 3>();
        if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            throw PreconditionError("Skeleton: rest transform rotation is not orthonormal");
    }
    if (parent[0] != -1) throw PreconditionError("Skeleton: joint 0 must be a root");
}

std::vector<Mat4> Skeleton::rest_global_transforms() const {
    const int n = n_joints();
    std::vector<Mat4> global(n);
    for (int j = 0; j < n; ++j) {
        global[j] = parent[j] < 0 ? rest_local_transforms[j]
                                  : Mat4(global[parent[j]] * rest_local_transforms[j]);
    }
    return global;
}

PoseFrame PoseFrame::rest(int n_joints) {
    PoseFrame f;
    f.joint_rotations = MatX4::Zero(n_joints, 4);
    f.joint_rotations.col(0).setOnes();
    return f;
}

std::vector<Mat4> compute_bone_transforms(const Skeleton& skeleton, const PoseFrame& pose) {
    const int n = skeleton.n_joints();
    if (pose.joint_rotations.rows() != n)
        throw PreconditionError("compute_bone_transforms: pose rotation count mismatch");

    std::vector<Mat4> posed(n);
    for (int j = 0; j < n; ++j) {
        const Vec4 q = quat_normalize<double>(Vec4(pose.joint_rotations.row(j)));
        Mat4 local = skeleton.rest_local_transforms[j];
        Mat4 rot = Mat4::Identity();
        rot.topLeftCorner<3, 3>() = quat_to_matrix<double>(q);
        local = local * rot; // rotation acts about the joint's own origin
        posed[j] = skeleton.parent[j] < 0 ? local : Mat4(posed[skeleton.parent[j]] * local);
    }

    Mat4 root_shift = Mat4::Identity();
    root_shift.topRightCorner<3, 1>() = pose.root_translation;

    const std::vector<Mat4> rest = skeleton.rest_global_transforms();
    std::vector<Mat4> bones(n);
    for (int j = 0; j < n; ++j)
        bones[j] = root_shift * posed[j] * rest[j].inverse();
    return bones;
}

Skeleton make_toy_biped() {
    // Joints: 0 pelvis (root), 1 spine, 2 head, 3 left leg, 4 right leg.
    Skeleton s;
    s.parent.resize(5);
    s.parent << -1, 0, 1, 0, 0;
    const auto translate = [](double x, double y, double z) {
        Mat4 t = Mat4::Identity();
        t.topRightCorner<3, 1>() = Vec3(x, y, z);
        return t;
    };
    s.rest_local_transforms = {
        translate(0.0, 0.0, 0.0),   // pelvis at origin
        translate(0.0, 0.45, 0.0),  // spine above pelvis
        translate(0.0, 0.4, 0.0),   // head above spine
        translate(-0.15, -0.5, 0.0), // left leg below pelvis
        translate(0.15, -0.5, 0.0),  // right leg
    };
    s.shape_params = VecX::Zero(2);
    return s;
}

RiggedMesh make_toy_biped_mesh() {
    const Skeleton biped = make_toy_biped();
    const std::vector<Mat4> global = biped.rest_global_transforms();
    const int nj = biped.n_joints();

    // One axis-aligned box per joint, centered at the joint.
    const double hx = 0.1, hy = 0.18, hz = 0.08;
    const int verts_per_box = 8, faces_per_box = 12;
    RiggedMesh rig;
    rig.vertices.resize(nj * verts_per_box, 3);
    rig.faces.resize(nj * faces_per_box, 3);
    rig.weights = MatX::Zero(nj * verts_per_box, nj);

    static const int corner[8][3] = {{-1, -1, -1}, {1, -1, -1}, {1, 1, -1}, {-1, 1, -1},
                                     {-1, -1, 1},  {1, -1, 1},  {1, 1, 1},  {-1, 1, 1}};
    static const int quad[6][4] = {{0, 1, 2, 3}, {4, 5, 6, 7}, {0, 1, 5, 4},
                                   {2, 3, 7, 6}, {0, 3, 7, 4}, {1, 2, 6, 5}};

    for (int j = 0; j < nj; ++j) {
        const Vec3 center = global[j].topRightCorner<3, 1>();
        for (int v = 0; v < verts_per_box; ++v) {
            rig.vertices.row(j * verts_per_box + v) =
                center + Vec3(corner[v][0] * hx, corner[v][1] * hy, corner[v][2] * hz);
            rig.weights(j * verts_per_box + v, j) = 1.0;
        }
        for (int f = 0; f < 6; ++f) {
            const int base = j * verts_per_box;
            rig.faces.row(j * faces_per_box + 2 * f) =
                Eigen::RowVector3i(base + quad[f][0], base + quad[f][1], base + quad[f][2]);
            rig.faces.row(j * faces_per_box + 2 * f + 1) =
                Eigen::RowVector3i(base + quad[f][0], base + quad[f][2], base + quad[f][3]);
        }
    }
    return rig;
}

} // namespace hsr
