#pragma once

#include "hsr/core/quaternion.hpp"
#include "hsr/core/types.hpp"
#include "hsr/error.hpp"

#include <vector>

namespace hsr {

/// Which coordinate frame a cloud currently lives in. Transitions happen only
/// through articulation (canonical -> deformed -> posed) and fusion (-> world).
enum class SpaceTag : std::uint8_t { canonical = 0, deformed = 1, posed = 2, world = 3 };

/// One splat. Scale and opacity are stored pre-activation (log / logit) so
/// unconstrained gradient steps keep the activated values in range.
struct Gaussian {
    Vec3 position = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0); // unit (w, x, y, z)
    Vec3 log_scale = Vec3::Zero();
    double opacity_logit = 0.0;
    VecX sh; // 3 * (degree + 1)^2 coefficients, channel-major (RRR..GGG..BBB..)

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return sigmoid(opacity_logit); }
};

inline int sh_band_count(int degree) { return (degree + 1) * (degree + 1); }
inline int sh_coeff_count(int degree) { return 3 * sh_band_count(degree); }

/// Real spherical harmonic basis values for a unit direction, degrees 0..3.
VecX sh_basis(int degree, const Vec3& dir);

/// Per-basis derivative with respect to the (unit) direction components,
/// K x 3. Used by the renderer backward pass.
MatX sh_basis_gradient(int degree, const Vec3& dir);

/// Evaluate SH color for a unit view direction: per channel
/// sum_k basis_k * coeff_k, plus the conventional +0.5 offset, clamped to
/// [0, 1]. `sh` holds 3*K coefficients channel-major.
Vec3 sh_to_color(const VecX& sh, const Vec3& view_dir);

/// 3D covariance of a splat: Sigma = R diag(exp(s))^2 R^T. Symmetric positive
/// definite for any finite log_scale; q must be unit.
Mat3 build_covariance(const Vec3& log_scale, const Vec4& q);

/// Attribute arrays for N splats. All rows share the index; arrays always
/// have matching lengths.
class GaussianCloud {
public:
    MatX3 positions;     // N x 3
    MatX4 rotations;     // N x 4, unit (w, x, y, z)
    MatX3 log_scales;    // N x 3
    VecX opacity_logits; // N
    MatX sh;             // N x 3K
    SpaceTag space = SpaceTag::canonical;

    GaussianCloud() = default;
    GaussianCloud(Index n, int sh_degree, SpaceTag tag = SpaceTag::canonical);

    Index size() const { return positions.rows(); }
    int sh_dim() const { return static_cast<int>(sh.cols()); }
    int sh_degree() const;

    Gaussian get(Index i) const;
    void set(Index i, const Gaussian& g);

    /// Keep only the rows where keep[i] is true.
    void filter(const std::vector<bool>& keep);

    /// Append all rows of `other` (sh dimensions must match).
    void append(const GaussianCloud& other);

    /// Re-normalize every rotation row. Call after unconstrained updates.
    void normalize_rotations();

    /// Axis-aligned bounds of the positions. Throws on an empty cloud.
    void bounding_box(Vec3& lo, Vec3& hi) const;

    void validate() const; // shape consistency; throws on violation
};

/// Triangle mesh used only as a sampling domain for cloud initialization.
struct TriMesh {
    MatX3 vertices;                          // V x 3
    Eigen::Matrix<int, Eigen::Dynamic, 3> faces; // F x 3 (may be empty)
};

/// Initialize a canonical cloud by sampling `count` points on the mesh.
/// Vertices are used first (all of them when count >= V); remaining points
/// are drawn area-weighted on the triangle surface (or with replacement from
/// the vertices when no faces exist). Rotations start at identity, opacity at
/// logit(0.1), and log_scale isotropically at the log mean distance to the 3
/// nearest sampled neighbors.
GaussianCloud sample_cloud_from_mesh(const TriMesh& mesh, Index count, int sh_degree = 0,
                                     std::uint64_t seed = 0);

} // namespace hsr
