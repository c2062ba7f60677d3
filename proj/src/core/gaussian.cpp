#include "hsr/core/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

namespace hsr {

namespace {

// Real SH basis constants, bands 0..3.
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

} // namespace

VecX sh_basis(int degree, const Vec3& dir) {
    if (degree < 0 || degree > 3)
        throw PreconditionError("sh_basis: degree must be in [0, 3]");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    VecX b(sh_band_count(degree));
    b[0] = kC0;
    if (degree >= 1) {
        b[1] = -kC1 * y;
        b[2] = kC1 * z;
        b[3] = -kC1 * x;
    }
    if (degree >= 2) {
        const double xx = x * x, yy = y * y, zz = z * z;
        b[4] = kC2[0] * x * y;
        b[5] = kC2[1] * y * z;
        b[6] = kC2[2] * (2.0 * zz - xx - yy);
        b[7] = kC2[3] * x * z;
        b[8] = kC2[4] * (xx - yy);
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        b[9] = kC3[0] * y * (3.0 * xx - yy);
        b[10] = kC3[1] * x * y * z;
        b[11] = kC3[2] * y * (4.0 * zz - xx - yy);
        b[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
        b[13] = kC3[4] * x * (4.0 * zz - xx - yy);
        b[14] = kC3[5] * z * (xx - yy);
        b[15] = kC3[6] * x * (xx - yy);
    }
    return b;
}

MatX sh_basis_gradient(int degree, const Vec3& dir) {
    if (degree < 0 || degree > 3)
        throw PreconditionError("sh_basis_gradient: degree must be in [0, 3]");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    MatX g = MatX::Zero(sh_band_count(degree), 3);
    if (degree >= 1) {
        g(1, 1) = -kC1;
        g(2, 2) = kC1;
        g(3, 0) = -kC1;
    }
    if (degree >= 2) {
        g(4, 0) = kC2[0] * y;
        g(4, 1) = kC2[0] * x;
        g(5, 1) = kC2[1] * z;
        g(5, 2) = kC2[1] * y;
        g(6, 0) = kC2[2] * -2.0 * x;
        g(6, 1) = kC2[2] * -2.0 * y;
        g(6, 2) = kC2[2] * 4.0 * z;
        g(7, 0) = kC2[3] * z;
        g(7, 2) = kC2[3] * x;
        g(8, 0) = kC2[4] * 2.0 * x;
        g(8, 1) = kC2[4] * -2.0 * y;
    }
    if (degree >= 3) {
        g(9, 0) = kC3[0] * 6.0 * x * y;
        g(9, 1) = kC3[0] * (3.0 * x * x - 3.0 * y * y);
        g(10, 0) = kC3[1] * y * z;
        g(10, 1) = kC3[1] * x * z;
        g(10, 2) = kC3[1] * x * y;
        g(11, 0) = kC3[2] * -2.0 * x * y;
        g(11, 1) = kC3[2] * (4.0 * z * z - x * x - 3.0 * y * y);
        g(11, 2) = kC3[2] * 8.0 * y * z;
        g(12, 0) = kC3[3] * -6.0 * x * z;
        g(12, 1) = kC3[3] * -6.0 * y * z;
        g(12, 2) = kC3[3] * (6.0 * z * z - 3.0 * x * x - 3.0 * y * y);
        g(13, 0) = kC3[4] * (4.0 * z * z - 3.0 * x * x - y * y);
        g(13, 1) = kC3[4] * -2.0 * x * y;
        g(13, 2) = kC3[4] * 8.0 * x * z;
        g(14, 0) = kC3[5] * 2.0 * x * z;
        g(14, 1) = kC3[5] * -2.0 * y * z;
        g(14, 2) = kC3[5] * (x * x - y * y);
        g(15, 0) = kC3[6] * 3.0 * x * x - kC3[6] * y * y;
        g(15, 1) = kC3[6] * -2.0 * x * y;
    }
    return g;
}

Vec3 sh_to_color(const VecX& sh, const Vec3& view_dir) {
    const Index total = sh.size();
    if (total % 3 != 0)
        throw PreconditionError("sh_to_color: coefficient count must be divisible by 3");
    const int bands = static_cast<int>(total / 3);
    int degree = 0;
    while (sh_band_count(degree) < bands) ++degree;
    if (sh_band_count(degree) != bands || degree > 3)
        throw PreconditionError("sh_to_color: coefficient count does not match a degree in [0, 3]");
    const VecX basis = sh_basis(degree, view_dir);
    Vec3 rgb;
    for (int c = 0; c < 3; ++c)
        rgb[c] = basis.dot(sh.segment(c * bands, bands)) + 0.5;
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

Mat3 build_covariance(const Vec3& log_scale, const Vec4& q) {
    const Mat3 r = quat_to_matrix<double>(q);
    const Vec3 s2 = (2.0 * log_scale).array().exp();
    return r * s2.asDiagonal() * r.transpose();
}

GaussianCloud::GaussianCloud(Index n, int sh_degree, SpaceTag tag)
    : positions(MatX3::Zero(n, 3)),
      rotations(MatX4::Zero(n, 4)),
      log_scales(MatX3::Zero(n, 3)),
      opacity_logits(VecX::Zero(n)),
      sh(MatX::Zero(n, sh_coeff_count(sh_degree))),
      space(tag) {
    rotations.col(0).setOnes();
}

int GaussianCloud::sh_degree() const {
    const int bands = sh_dim() / 3;
    int degree = 0;
    while (sh_band_count(degree) < bands) ++degree;
    return degree;
}

Gaussian GaussianCloud::get(Index i) const {
    Gaussian g;
    g.position = positions.row(i);
    g.rotation = rotations.row(i);
    g.log_scale = log_scales.row(i);
    g.opacity_logit = opacity_logits[i];
    g.sh = sh.row(i);
    return g;
}

void GaussianCloud::set(Index i, const Gaussian& g) {
    if (g.sh.size() != sh.cols())
        throw PreconditionError("GaussianCloud::set: SH dimension mismatch");
    positions.row(i) = g.position;
    rotations.row(i) = quat_normalize<double>(g.rotation);
    log_scales.row(i) = g.log_scale;
    opacity_logits[i] = g.opacity_logit;
    sh.row(i) = g.sh;
}

void GaussianCloud::filter(const std::vector<bool>& keep) {
    if (static_cast<Index>(keep.size()) != size())
        throw PreconditionError("GaussianCloud::filter: mask length mismatch");
    const Index kept = std::count(keep.begin(), keep.end(), true);
    GaussianCloud out(kept, sh_degree(), space);
    out.sh.resize(kept, sh.cols());
    Index j = 0;
    for (Index i = 0; i < size(); ++i) {
        if (!keep[i]) continue;
        out.positions.row(j) = positions.row(i);
        out.rotations.row(j) = rotations.row(i);
        out.log_scales.row(j) = log_scales.row(i);
        out.opacity_logits[j] = opacity_logits[i];
        out.sh.row(j) = sh.row(i);
        ++j;
    }
    *this = std::move(out);
}

void GaussianCloud::append(const GaussianCloud& other) {
    if (other.sh.cols() != sh.cols())
        throw PreconditionError("GaussianCloud::append: SH dimension mismatch");
    const Index n = size(), m = other.size();
    positions.conservativeResize(n + m, 3);
    rotations.conservativeResize(n + m, 4);
    log_scales.conservativeResize(n + m, 3);
    opacity_logits.conservativeResize(n + m);
    sh.conservativeResize(n + m, sh.cols());
    positions.bottomRows(m) = other.positions;
    rotations.bottomRows(m) = other.rotations;
    log_scales.bottomRows(m) = other.log_scales;
    opacity_logits.tail(m) = other.opacity_logits;
    sh.bottomRows(m) = other.sh;
}

void GaussianCloud::normalize_rotations() {
    for (Index i = 0; i < size(); ++i) {
        const Vec4 q = rotations.row(i);
        rotations.row(i) = quat_normalize<double>(q);
    }
}

void GaussianCloud::bounding_box(Vec3& lo, Vec3& hi) const {
    if (size() == 0) throw PreconditionError("bounding_box: empty cloud");
    lo = positions.colwise().minCoeff();
    hi = positions.colwise().maxCoeff();
}

void GaussianCloud::validate() const {
    const Index n = size();
    if (rotations.rows() != n || log_scales.rows() != n || opacity_logits.size() != n ||
        sh.rows() != n)
        throw PreconditionError("GaussianCloud: attribute array lengths differ");
    if (sh.cols() % 3 != 0)
        throw PreconditionError("GaussianCloud: SH column count must be divisible by 3");
}

namespace {

// Mean distance to the k nearest neighbors for every point, via a uniform
// voxel grid so large clouds stay O(N) in practice.
VecX mean_knn_distance(const MatX3& pts, int k) {
    const Index n = pts.rows();
    VecX out = VecX::Ones(n);
    if (n <= 1) return out;
    k = std::min<int>(k, static_cast<int>(n - 1));

    const Vec3 lo = pts.colwise().minCoeff();
    const Vec3 hi = pts.colwise().maxCoeff();
    const double diag = std::max((hi - lo).norm(), 1e-12);
    const double cell = std::max(diag / std::cbrt(static_cast<double>(n)), 1e-12);

    const auto key = [&](const Vec3& p) {
        const auto ix = static_cast<std::int64_t>(std::floor((p.x() - lo.x()) / cell));
        const auto iy = static_cast<std::int64_t>(std::floor((p.y() - lo.y()) / cell));
        const auto iz = static_cast<std::int64_t>(std::floor((p.z() - lo.z()) / cell));
        return std::tuple<std::int64_t, std::int64_t, std::int64_t>(ix, iy, iz);
    };

    std::map<std::tuple<std::int64_t, std::int64_t, std::int64_t>, std::vector<Index>> grid;
    for (Index i = 0; i < n; ++i) grid[key(pts.row(i))].push_back(i);

    std::vector<double> dists;
    for (Index i = 0; i < n; ++i) {
        const Vec3 p = pts.row(i);
        const auto [cx, cy, cz] = key(p);
        dists.clear();
        // Expand the ring search until k neighbors are guaranteed inside it.
        for (std::int64_t ring = 1; ring < 64; ++ring) {
            dists.clear();
            for (std::int64_t dx = -ring; dx <= ring; ++dx)
                for (std::int64_t dy = -ring; dy <= ring; ++dy)
                    for (std::int64_t dz = -ring; dz <= ring; ++dz) {
                        const auto it = grid.find({cx + dx, cy + dy, cz + dz});
                        if (it == grid.end()) continue;
                        for (Index j : it->second) {
                            if (j == i) continue;
                            dists.push_back((Vec3(pts.row(j)) - p).norm());
                        }
                    }
            // Neighbors within (ring-1) cells are all collected; enough of
            // them close by means the k-th nearest cannot be outside.
            if (static_cast<int>(dists.size()) >= k) {
                std::nth_element(dists.begin(), dists.begin() + (k - 1), dists.end());
                const double kth = dists[k - 1];
                if (kth <= cell * static_cast<double>(ring - 1) || ring >= 63) break;
            }
        }
        if (static_cast<int>(dists.size()) < k) {
            // Sparse fallback: brute force.
            dists.clear();
            for (Index j = 0; j < n; ++j)
                if (j != i) dists.push_back((Vec3(pts.row(j)) - p).norm());
        }
        std::partial_sort(dists.begin(), dists.begin() + k, dists.end());
        out[i] = std::accumulate(dists.begin(), dists.begin() + k, 0.0) / k;
    }
    return out;
}

} // namespace

GaussianCloud sample_cloud_from_mesh(const TriMesh& mesh, Index count, int sh_degree,
                                     std::uint64_t seed) {
    const Index nv = mesh.vertices.rows();
    if (nv == 0) throw PreconditionError("sample_cloud_from_mesh: empty mesh");
    if (count < 1) throw PreconditionError("sample_cloud_from_mesh: count must be >= 1");

    Rng rng(seed);
    MatX3 pts(count, 3);

    if (count <= nv) {
        // Deterministic prefix keeps count == V exactly equal to the vertex set.
        for (Index i = 0; i < count; ++i) pts.row(i) = mesh.vertices.row(i);
    } else {
        pts.topRows(nv) = mesh.vertices;
        const Index extra = count - nv;
        const Index nf = mesh.faces.rows();
        if (nf > 0) {
            VecX cumulative(nf);
            double total = 0.0;
            for (Index f = 0; f < nf; ++f) {
                const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
                const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
                const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
                total += 0.5 * (b - a).cross(c - a).norm();
                cumulative[f] = total;
            }
            for (Index i = 0; i < extra; ++i) {
                Index f = 0;
                if (total > 0.0) {
                    const double u = rng.uniform() * total;
                    f = std::lower_bound(cumulative.data(), cumulative.data() + nf, u) -
                        cumulative.data();
                    f = std::min<Index>(f, nf - 1);
                } else {
                    f = rng.uniform_int(nf);
                }
                double r1 = rng.uniform(), r2 = rng.uniform();
                if (r1 + r2 > 1.0) {
                    r1 = 1.0 - r1;
                    r2 = 1.0 - r2;
                }
                const Vec3 a = mesh.vertices.row(mesh.faces(f, 0));
                const Vec3 b = mesh.vertices.row(mesh.faces(f, 1));
                const Vec3 c = mesh.vertices.row(mesh.faces(f, 2));
                pts.row(nv + i) = a + r1 * (b - a) + r2 * (c - a);
            }
        } else {
            for (Index i = 0; i < extra; ++i)
                pts.row(nv + i) = mesh.vertices.row(rng.uniform_int(nv));
        }
    }

    GaussianCloud cloud(count, sh_degree, SpaceTag::canonical);
    cloud.positions = pts;
    cloud.opacity_logits.setConstant(logit(0.1));
    const VecX nn = mean_knn_distance(pts, 3);
    for (Index i = 0; i < count; ++i)
        cloud.log_scales.row(i).setConstant(std::log(std::max(nn[i], 1e-9)));
    return cloud;
}

} // namespace hsr
