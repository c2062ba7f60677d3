#include "hsr/render/renderer.hpp"

#include "hsr/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <thread>

namespace hsr {

namespace {

struct SplatDetail {
    Vec3 p_cam;        // camera-space position
    Vec3 view_dir;     // unit, world space
    double view_dist;  // |position - camera center|
    Vec3 raw_color;    // SH evaluation + 0.5, before clamping
    Vec4 q_unit;       // normalized rotation actually used
    Vec4 q_raw;
    Mat2 cov2d_inv;
    double inv_det;    // of cov2d
};

// Projects one splat; fills cache entry and (optionally) extra detail used by
// the backward pass. Returns false when culled.
bool project_one(const GaussianCloud& cloud, Index i, const Camera& cam,
                 const RenderOptions& opts, RenderCache::Splat& out, SplatDetail* detail) {
    const Vec3 pos = cloud.positions.row(i);
    const Vec3 p_cam = cam.rotation() * pos + cam.translation();
    if (p_cam.z() <= opts.near_plane) {
        out.culled = true;
        return false;
    }
    const double z = p_cam.z();
    out.mean2d = Vec2(cam.fx * p_cam.x() / z + cam.cx, cam.fy * p_cam.y() / z + cam.cy);
    out.depth = z;

    const Vec4 q_raw = cloud.rotations.row(i);
    const Vec4 q = quat_normalize<double>(q_raw);
    const Mat3 sigma = build_covariance(cloud.log_scales.row(i), q);

    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx / z, 0.0, -cam.fx * p_cam.x() / (z * z),
           0.0, cam.fy / z, -cam.fy * p_cam.y() / (z * z);
    const Eigen::Matrix<double, 2, 3> m = jac * cam.rotation();
    out.cov2d = m * sigma * m.transpose();
    out.cov2d += opts.cov2d_dilation * Mat2::Identity();

    const double det = out.cov2d.determinant();
    Mat2 inv;
    inv << out.cov2d(1, 1), -out.cov2d(0, 1), -out.cov2d(1, 0), out.cov2d(0, 0);
    inv /= det;
    out.cov2d_inv = inv;

    const Vec3 to_splat = pos - cam.center();
    const double dist = to_splat.norm();
    const Vec3 dir = dist > 1e-12 ? Vec3(to_splat / dist) : Vec3(0, 0, 1);
    const VecX sh_row = cloud.sh.row(i);
    const VecX basis = sh_basis(cloud.sh_degree(), dir);
    const int bands = static_cast<int>(basis.size());
    Vec3 raw;
    for (int c = 0; c < 3; ++c) raw[c] = basis.dot(sh_row.segment(c * bands, bands)) + 0.5;
    out.color = raw.cwiseMax(0.0).cwiseMin(1.0);
    out.opacity = sigmoid(cloud.opacity_logits[i]);
    out.culled = false;

    if (detail) {
        detail->p_cam = p_cam;
        detail->view_dir = dir;
        detail->view_dist = dist;
        detail->raw_color = raw;
        detail->q_unit = q;
        detail->q_raw = q_raw;
        detail->cov2d_inv = inv;
        detail->inv_det = 1.0 / det;
    }
    return true;
}

// Compositing of one pixel over an ordered contributor list.
template <typename SplatRange>
void composite_pixel(double px, double py, const SplatRange& ids,
                     const std::vector<RenderCache::Splat>& splats, const RenderOptions& opts,
                     const Vec3& background, bool use_early_stop, double* rgb, double* alpha,
                     double* depth) {
    const double cutoff2 = opts.cutoff_sigma > 0 ? opts.cutoff_sigma * opts.cutoff_sigma : -1.0;
    double t = 1.0;
    Vec3 c = Vec3::Zero();
    double d_acc = 0.0;
    for (int id : ids) {
        const RenderCache::Splat& s = splats[id];
        const Vec2 d(px - s.mean2d.x(), py - s.mean2d.y());
        const double maha = d.dot(s.cov2d_inv * d);
        if (cutoff2 > 0.0 && maha > cutoff2) continue;
        const double g = std::exp(-0.5 * maha);
        double a = s.opacity * g;
        if (a > opts.alpha_clamp) a = opts.alpha_clamp;
        if (a <= 0.0) continue;
        c += s.color * (a * t);
        if (depth) d_acc += s.depth * a * t;
        t *= 1.0 - a;
        if (use_early_stop && opts.early_stop_transmittance > 0.0 &&
            t < opts.early_stop_transmittance)
            break;
    }
    c += background * t;
    rgb[0] = c[0];
    rgb[1] = c[1];
    rgb[2] = c[2];
    *alpha = 1.0 - t;
    if (depth) *depth = d_acc;
}

void run_tiles(int tiles_total, int num_threads, const std::function<void(int)>& body) {
    if (num_threads <= 1) {
        for (int ti = 0; ti < tiles_total; ++ti) body(ti);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    for (int k = 0; k < num_threads; ++k) {
        pool.emplace_back([&]() {
            for (;;) {
                const int ti = next.fetch_add(1);
                if (ti >= tiles_total) return;
                body(ti);
            }
        });
    }
    for (auto& th : pool) th.join();
}

} // namespace

ProjectedGaussian project_gaussian(const Gaussian& g, const Camera& cam,
                                   const RenderOptions& opts) {
    GaussianCloud one(1, 0);
    one.sh.resize(1, g.sh.size() ? g.sh.size() : 3);
    one.sh.setZero();
    one.positions.row(0) = g.position;
    one.rotations.row(0) = g.rotation;
    one.log_scales.row(0) = g.log_scale;
    one.opacity_logits[0] = g.opacity_logit;
    if (g.sh.size()) one.sh.row(0) = g.sh;

    RenderCache::Splat s;
    ProjectedGaussian out;
    out.culled = !project_one(one, 0, cam, opts, s, nullptr);
    if (!out.culled) {
        out.mean2d = s.mean2d;
        out.cov2d = s.cov2d;
        out.depth = s.depth;
    }
    return out;
}

std::vector<int> depth_sort(const std::vector<double>& depths) {
    std::vector<int> order(depths.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return depths[a] < depths[b]; });
    return order;
}

std::uint64_t cloud_fingerprint(const GaussianCloud& cloud) {
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    const auto mix = [&h](const double* data, Index count) {
        const auto* bytes = reinterpret_cast<const unsigned char*>(data);
        for (Index i = 0; i < count * static_cast<Index>(sizeof(double)); ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    mix(cloud.positions.data(), cloud.positions.size());
    mix(cloud.rotations.data(), cloud.rotations.size());
    mix(cloud.log_scales.data(), cloud.log_scales.size());
    mix(cloud.opacity_logits.data(), cloud.opacity_logits.size());
    mix(cloud.sh.data(), cloud.sh.size());
    return h;
}

static void prepare_cache(const GaussianCloud& cloud, const Camera& cam,
                          const RenderOptions& opts, RenderCache& cache, bool build_tiles) {
    cloud.validate();
    cam.validate();
    if (cam.width < 1 || cam.height < 1)
        throw PreconditionError("render: zero-sized image");

    const Index n = cloud.size();
    cache.splats.assign(n, {});
    std::vector<double> depths;
    std::vector<int> visible;
    depths.reserve(n);
    visible.reserve(n);
    for (Index i = 0; i < n; ++i) {
        if (project_one(cloud, i, cam, opts, cache.splats[i], nullptr)) {
            visible.push_back(static_cast<int>(i));
            depths.push_back(cache.splats[i].depth);
        }
    }
    const std::vector<int> order_local = depth_sort(depths);
    cache.order.resize(order_local.size());
    for (size_t k = 0; k < order_local.size(); ++k) cache.order[k] = visible[order_local[k]];

    cache.width = cam.width;
    cache.height = cam.height;
    cache.options = opts;
    cache.cloud_fingerprint = cloud_fingerprint(cloud);

    if (!build_tiles) {
        cache.tile_lists.clear();
        cache.tiles_x = cache.tiles_y = 0;
        return;
    }
    const int ts = std::max(opts.tile_size, 1);
    cache.tiles_x = (cam.width + ts - 1) / ts;
    cache.tiles_y = (cam.height + ts - 1) / ts;
    cache.tile_lists.assign(static_cast<size_t>(cache.tiles_x) * cache.tiles_y, {});
    for (int id : cache.order) {
        const RenderCache::Splat& s = cache.splats[id];
        int tx0 = 0, tx1 = cache.tiles_x - 1, ty0 = 0, ty1 = cache.tiles_y - 1;
        if (opts.cutoff_sigma > 0.0) {
            // Conservative screen bound: cutoff * sqrt(largest eigenvalue).
            const double mid = 0.5 * (s.cov2d(0, 0) + s.cov2d(1, 1));
            const double h = std::sqrt(std::max(
                0.0, 0.25 * std::pow(s.cov2d(0, 0) - s.cov2d(1, 1), 2) +
                         s.cov2d(0, 1) * s.cov2d(1, 0)));
            const double radius = opts.cutoff_sigma * std::sqrt(std::max(mid + h, 0.0));
            const double x0 = s.mean2d.x() - radius, x1 = s.mean2d.x() + radius;
            const double y0 = s.mean2d.y() - radius, y1 = s.mean2d.y() + radius;
            if (x1 < 0.0 || y1 < 0.0 || x0 > cam.width || y0 > cam.height) continue;
            tx0 = std::clamp(static_cast<int>(std::floor(x0 / ts)), 0, cache.tiles_x - 1);
            tx1 = std::clamp(static_cast<int>(std::floor(x1 / ts)), 0, cache.tiles_x - 1);
            ty0 = std::clamp(static_cast<int>(std::floor(y0 / ts)), 0, cache.tiles_y - 1);
            ty1 = std::clamp(static_cast<int>(std::floor(y1 / ts)), 0, cache.tiles_y - 1);
        }
        for (int ty = ty0; ty <= ty1; ++ty)
            for (int tx = tx0; tx <= tx1; ++tx)
                cache.tile_lists[static_cast<size_t>(ty) * cache.tiles_x + tx].push_back(id);
    }
}

RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                    const RenderOptions& opts, RenderCache* cache_out) {
    RenderCache local;
    RenderCache& cache = cache_out ? *cache_out : local;
    prepare_cache(cloud, cam, opts, cache, /*build_tiles=*/true);
    cache.background = background;

    RenderOutput out;
    out.color = Image(cam.height, cam.width);
    out.alpha = GrayImage::Zero(cam.height, cam.width);
    if (opts.with_depth) out.depth = GrayImage::Zero(cam.height, cam.width);
    cache.transmittance = GrayImage::Ones(cam.height, cam.width);

    const int ts = std::max(opts.tile_size, 1);
    const int tiles_total = cache.tiles_x * cache.tiles_y;
    run_tiles(tiles_total, opts.num_threads, [&](int ti) {
        const int tx = ti % cache.tiles_x, ty = ti / cache.tiles_x;
        const auto& ids = cache.tile_lists[ti];
        const int x0 = tx * ts, x1 = std::min((tx + 1) * ts, cam.width);
        const int y0 = ty * ts, y1 = std::min((ty + 1) * ts, cam.height);
        double rgb[3], alpha, depth;
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                composite_pixel(x + 0.5, y + 0.5, ids, cache.splats, opts, background,
                                /*use_early_stop=*/true, rgb, &alpha,
                                opts.with_depth ? &depth : nullptr);
                out.color.r(y, x) = rgb[0];
                out.color.g(y, x) = rgb[1];
                out.color.b(y, x) = rgb[2];
                out.alpha(y, x) = alpha;
                cache.transmittance(y, x) = 1.0 - alpha;
                if (opts.with_depth) out.depth(y, x) = depth;
            }
        }
    });
    cache.valid = true;
    return out;
}

RenderOutput render_naive(const GaussianCloud& cloud, const Camera& cam, const Vec3& background,
                          const RenderOptions& opts) {
    RenderCache cache;
    prepare_cache(cloud, cam, opts, cache, /*build_tiles=*/false);

    RenderOutput out;
    out.color = Image(cam.height, cam.width);
    out.alpha = GrayImage::Zero(cam.height, cam.width);
    if (opts.with_depth) out.depth = GrayImage::Zero(cam.height, cam.width);

    double rgb[3], alpha, depth;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            composite_pixel(x + 0.5, y + 0.5, cache.order, cache.splats, opts, background,
                            /*use_early_stop=*/false, rgb, &alpha,
                            opts.with_depth ? &depth : nullptr);
            out.color.r(y, x) = rgb[0];
            out.color.g(y, x) = rgb[1];
            out.color.b(y, x) = rgb[2];
            out.alpha(y, x) = alpha;
            if (opts.with_depth) out.depth(y, x) = depth;
        }
    }
    return out;
}

CloudGrads CloudGrads::zero(Index n, int sh_dim) {
    CloudGrads g;
    g.d_positions = MatX3::Zero(n, 3);
    g.d_rotations = MatX4::Zero(n, 4);
    g.d_log_scales = MatX3::Zero(n, 3);
    g.d_opacity_logits = VecX::Zero(n);
    g.d_sh = MatX::Zero(n, sh_dim);
    g.screen_grad_norm = VecX::Zero(n);
    return g;
}

void CloudGrads::add(const CloudGrads& other) {
    d_positions += other.d_positions;
    d_rotations += other.d_rotations;
    d_log_scales += other.d_log_scales;
    d_opacity_logits += other.d_opacity_logits;
    d_sh += other.d_sh;
    screen_grad_norm += other.screen_grad_norm;
}

bool CloudGrads::all_finite() const {
    return d_positions.allFinite() && d_rotations.allFinite() && d_log_scales.allFinite() &&
           d_opacity_logits.allFinite() && d_sh.allFinite();
}

namespace {

// d(R)/dq for a unit quaternion, one 3x3 slice per component.
std::array<Mat3, 4> rotation_matrix_jacobian(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> j;
    j[0] << 0, -z, y, z, 0, -x, -y, x, 0;
    j[1] << 0, y, z, y, -2 * x, -w, z, w, -2 * x;
    j[2] << -2 * y, x, w, x, 0, z, -w, z, -2 * y;
    j[3] << -2 * z, -w, x, w, -2 * z, y, x, y, 0;
    for (auto& m : j) m *= 2.0;
    return j;
}

} // namespace

CloudGrads render_backward(const GaussianCloud& cloud, const Camera& cam,
                           const Image& grad_color, const GrayImage& grad_alpha,
                           const RenderCache& cache) {
    if (!cache.valid) throw PreconditionError("render_backward: no forward cache");
    if (cache.cloud_fingerprint != cloud_fingerprint(cloud))
        throw PreconditionError("render_backward: stale cache (cloud changed since forward)");
    if (grad_color.height() != cache.height || grad_color.width() != cache.width ||
        grad_alpha.rows() != cache.height || grad_alpha.cols() != cache.width)
        throw PreconditionError("render_backward: gradient image shape mismatch");

    const RenderOptions& opts = cache.options;
    const Index n = cloud.size();
    const int sh_dim = cloud.sh_dim();
    const int bands = sh_dim / 3;
    CloudGrads grads = CloudGrads::zero(n, sh_dim);

    // Per-splat screen-space accumulators.
    std::vector<Vec2> g_mean2d(n, Vec2::Zero());
    std::vector<Mat2> g_cov2d(n, Mat2::Zero());
    std::vector<Vec3> g_color(n, Vec3::Zero());
    std::vector<double> g_alpha_splat(n, 0.0);

    const double cutoff2 = opts.cutoff_sigma > 0 ? opts.cutoff_sigma * opts.cutoff_sigma : -1.0;

    struct Contribution {
        int id;
        double alpha;
        double gaussian; // exp term
        double t_before;
        bool clamped;
        Vec2 d;
    };
    std::vector<Contribution> contribs;
    contribs.reserve(64);

    const int ts = std::max(opts.tile_size, 1);
    for (int ty = 0; ty < cache.tiles_y; ++ty) {
        for (int tx = 0; tx < cache.tiles_x; ++tx) {
            const auto& ids = cache.tile_lists[static_cast<size_t>(ty) * cache.tiles_x + tx];
            if (ids.empty()) continue;
            const int x0 = tx * ts, x1 = std::min((tx + 1) * ts, cache.width);
            const int y0 = ty * ts, y1 = std::min((ty + 1) * ts, cache.height);
            for (int y = y0; y < y1; ++y) {
                for (int x = x0; x < x1; ++x) {
                    const Vec3 g_pix(grad_color.r(y, x), grad_color.g(y, x), grad_color.b(y, x));
                    const double g_a = grad_alpha(y, x);
                    if (g_pix.isZero(0.0) && g_a == 0.0) continue;

                    // Replay the forward compositing for this pixel.
                    contribs.clear();
                    const double px = x + 0.5, py = y + 0.5;
                    double t = 1.0;
                    for (int id : ids) {
                        const RenderCache::Splat& s = cache.splats[id];
                        const Vec2 d(px - s.mean2d.x(), py - s.mean2d.y());
                        const double maha = d.dot(s.cov2d_inv * d);
                        if (cutoff2 > 0.0 && maha > cutoff2) continue;
                        const double g = std::exp(-0.5 * maha);
                        double a = s.opacity * g;
                        const bool clamped = a > opts.alpha_clamp;
                        if (clamped) a = opts.alpha_clamp;
                        if (a <= 0.0) continue;
                        contribs.push_back({id, a, g, t, clamped, d});
                        t *= 1.0 - a;
                        if (opts.early_stop_transmittance > 0.0 &&
                            t < opts.early_stop_transmittance)
                            break;
                    }
                    const double t_final = t;

                    // Reverse scan; suffix holds sum_{j>i} c_j a_j T_j.
                    Vec3 suffix = Vec3::Zero();
                    for (auto it = contribs.rbegin(); it != contribs.rend(); ++it) {
                        const RenderCache::Splat& s = cache.splats[it->id];
                        const double w = it->alpha * it->t_before;
                        g_color[it->id] += g_pix * w;
                        double d_alpha =
                            g_pix.dot(s.color * it->t_before -
                                      (suffix + cache.background * t_final) / (1.0 - it->alpha));
                        d_alpha += g_a * t_final / (1.0 - it->alpha);
                        suffix += s.color * w;
                        if (it->clamped) continue; // flat region of the clamp
                        const double d_g = d_alpha * s.opacity;
                        g_alpha_splat[it->id] += d_alpha * it->gaussian; // d alpha / d opacity
                        const double d_maha = d_g * (-0.5 * it->gaussian);
                        const Vec2 sinv_d = s.cov2d_inv * it->d;
                        // d = pixel - mean, so dL/dmean = -dL/dd = -2 d_maha Sinv d.
                        g_mean2d[it->id] += -2.0 * d_maha * sinv_d;
                        g_cov2d[it->id] += -d_maha * (sinv_d * sinv_d.transpose());
                    }
                }
            }
        }
    }

    // Chain screen-space gradients to the 3D attributes, one splat at a time.
    for (Index i = 0; i < n; ++i) {
        RenderCache::Splat s;
        SplatDetail det;
        if (!project_one(cloud, i, cam, opts, s, &det)) continue;

        grads.screen_grad_norm[i] = g_mean2d[i].norm();

        // Opacity.
        const double o = s.opacity;
        grads.d_opacity_logits[i] = g_alpha_splat[i] * o * (1.0 - o);

        // Color -> SH (and view direction). Clamped channels are flat.
        const VecX basis = sh_basis(cloud.sh_degree(), det.view_dir);
        const MatX basis_grad = sh_basis_gradient(cloud.sh_degree(), det.view_dir);
        Vec3 g_dir = Vec3::Zero();
        for (int c = 0; c < 3; ++c) {
            const double raw = det.raw_color[c];
            if (raw <= 0.0 || raw >= 1.0) continue;
            const double gc = g_color[i][c];
            if (gc == 0.0) continue;
            grads.d_sh.row(i).segment(c * bands, bands) += gc * basis.transpose();
            g_dir += gc * (basis_grad.transpose() * cloud.sh.row(i).segment(c * bands, bands).transpose());
        }
        if (!g_dir.isZero(0.0)) {
            const Mat3 dir_jac =
                (Mat3::Identity() - det.view_dir * det.view_dir.transpose()) / det.view_dist;
            grads.d_positions.row(i) += (dir_jac.transpose() * g_dir).transpose();
        }

        // cov2d = M Sigma M^T + dilation I, with M = J R.
        const Mat2 g_c2 = g_cov2d[i];
        const double z = det.p_cam.z();
        Eigen::Matrix<double, 2, 3> jac;
        jac << cam.fx / z, 0.0, -cam.fx * det.p_cam.x() / (z * z),
               0.0, cam.fy / z, -cam.fy * det.p_cam.y() / (z * z);
        const Mat3 rot_w2c = cam.rotation();
        const Eigen::Matrix<double, 2, 3> m = jac * rot_w2c;
        const Mat3 sigma = build_covariance(cloud.log_scales.row(i), det.q_unit);

        const Mat3 g_sigma = m.transpose() * g_c2 * m;
        const Eigen::Matrix<double, 2, 3> g_m = (g_c2 + g_c2.transpose()) * m * sigma;
        const Eigen::Matrix<double, 2, 3> g_jac = g_m * rot_w2c.transpose();

        // J entries depend on p_cam.
        Vec3 g_pcam = Vec3::Zero();
        const double z2 = z * z, z3 = z2 * z;
        g_pcam.x() += g_jac(0, 2) * (-cam.fx / z2);
        g_pcam.y() += g_jac(1, 2) * (-cam.fy / z2);
        g_pcam.z() += g_jac(0, 0) * (-cam.fx / z2) + g_jac(1, 1) * (-cam.fy / z2) +
                      g_jac(0, 2) * (2.0 * cam.fx * det.p_cam.x() / z3) +
                      g_jac(1, 2) * (2.0 * cam.fy * det.p_cam.y() / z3);

        // mean2d depends on p_cam.
        const Vec2 g_mu = g_mean2d[i];
        g_pcam.x() += g_mu.x() * cam.fx / z;
        g_pcam.y() += g_mu.y() * cam.fy / z;
        g_pcam.z() += -g_mu.x() * cam.fx * det.p_cam.x() / z2 -
                      g_mu.y() * cam.fy * det.p_cam.y() / z2;

        grads.d_positions.row(i) += (rot_w2c.transpose() * g_pcam).transpose();

        // Sigma = R D R^T with D = diag(exp(2 s)).
        const Mat3 rot_q = quat_to_matrix<double>(det.q_unit);
        const Vec3 scale2 = (2.0 * Vec3(cloud.log_scales.row(i))).array().exp();
        const Mat3 g_sigma_sym = g_sigma + g_sigma.transpose();
        const Mat3 g_d = rot_q.transpose() * g_sigma * rot_q;
        for (int k = 0; k < 3; ++k)
            grads.d_log_scales(i, k) = g_d(k, k) * 2.0 * scale2[k];
        const Mat3 g_rot = g_sigma_sym * rot_q * scale2.asDiagonal();
        const std::array<Mat3, 4> rj = rotation_matrix_jacobian(det.q_unit);
        Vec4 g_q_unit;
        for (int k = 0; k < 4; ++k) g_q_unit[k] = (g_rot.array() * rj[k].array()).sum();
        grads.d_rotations.row(i) =
            (quat_normalize_jacobian<double>(det.q_raw).transpose() * g_q_unit).transpose();
    }
    return grads;
}

} // namespace hsr
