#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <random>

namespace hsr {

using Index = Eigen::Index;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;
using MatX3 = Eigen::Matrix<double, Eigen::Dynamic, 3>;
using MatX4 = Eigen::Matrix<double, Eigen::Dynamic, 4>;
using ArrX = Eigen::ArrayXd;
using ArrXX = Eigen::ArrayXXd;

template <typename T> using Vec3T = Eigen::Matrix<T, 3, 1>;
template <typename T> using Vec4T = Eigen::Matrix<T, 4, 1>;
template <typename T> using Mat3T = Eigen::Matrix<T, 3, 3>;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// RGB image as three H x W channel arrays (row = y, col = x), values
/// nominally in [0, 1].
struct Image {
    ArrXX r, g, b;

    Image() = default;
    Image(Index height, Index width, double fill = 0.0)
        : r(ArrXX::Constant(height, width, fill)),
          g(ArrXX::Constant(height, width, fill)),
          b(ArrXX::Constant(height, width, fill)) {}

    Index height() const { return r.rows(); }
    Index width() const { return r.cols(); }

    ArrXX& channel(int c) { return c == 0 ? r : (c == 1 ? g : b); }
    const ArrXX& channel(int c) const { return c == 0 ? r : (c == 1 ? g : b); }

    bool same_shape(const Image& o) const {
        return height() == o.height() && width() == o.width();
    }
};

/// Single-channel H x W array (masks, alpha maps, depth).
using GrayImage = ArrXX;

/// Deterministic random source. All distributions are implemented inline so a
/// fixed seed reproduces streams bit-for-bit across platforms and standard
/// library versions.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : gen_(seed) {}

    std::uint64_t raw() { return gen_(); }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n).
    std::int64_t uniform_int(std::int64_t n) {
        // Modulo bias is negligible for n << 2^64 and keeps the stream simple.
        return static_cast<std::int64_t>(gen_() % static_cast<std::uint64_t>(n));
    }

    /// Standard normal via Box-Muller (no cached spare, two draws per call).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    Vec3 normal_vec3() {
        const double a = normal(), b = normal(), c = normal();
        return Vec3(a, b, c);
    }

    Vec3 uniform_vec3(double lo, double hi) {
        const double a = uniform(lo, hi), b = uniform(lo, hi), c = uniform(lo, hi);
        return Vec3(a, b, c);
    }

    /// Uniformly distributed unit quaternion (w, x, y, z).
    Vec4 unit_quaternion() {
        Vec4 q;
        do {
            q = Vec4(normal(), normal(), normal(), normal());
        } while (q.norm() < 1e-8);
        return q / q.norm();
    }

private:
    std::mt19937_64 gen_;
};

} // namespace hsr
