#pragma once

// Independent reference implementations used to check the library. These must
// stay decoupled from the code paths they verify: table-driven quaternion
// products, brute-force window scans, central finite differences.

#include "hsr/core/types.hpp"

#include <cmath>
#include <functional>

namespace hsr::testing {

/// Hamilton product straight from the basis multiplication table
/// (e_i * e_j accumulation), independent of the component formulas.
inline Vec4 quat_multiply_oracle(const Vec4& a, const Vec4& b) {
    // table[i][j] = (sign, basis index) for e_i * e_j with basis (1, i, j, k).
    static const int sign[4][4] = {{+1, +1, +1, +1},
                                   {+1, -1, +1, -1},
                                   {+1, -1, -1, +1},
                                   {+1, +1, -1, -1}};
    static const int basis[4][4] = {{0, 1, 2, 3},
                                    {1, 0, 3, 2},
                                    {2, 3, 0, 1},
                                    {3, 2, 1, 0}};
    Vec4 out = Vec4::Zero();
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 4; ++j)
            out[basis[i][j]] += sign[i][j] * a[i] * b[j];
    return out;
}

/// Central finite difference d f / d x at x with step h.
inline double central_difference(const std::function<double(double)>& f, double x,
                                 double h = 1e-4) {
    return (f(x + h) - f(x - h)) / (2.0 * h);
}

/// Relative error with an absolute floor so near-zero pairs compare sanely.
inline double relative_error(double got, double want, double floor_val = 1e-6) {
    const double denom = std::max({std::abs(got), std::abs(want), floor_val});
    return std::abs(got - want) / denom;
}

/// Brute-force SSIM over all valid 11x11 windows with a Gaussian weighting
/// (sigma 1.5), K1=0.01, K2=0.03, unit dynamic range. Per-channel mean.
double ssim_oracle(const Image& a, const Image& b);

/// Direct single-channel mean local SSIM (valid windows).
double ssim_oracle_channel(const ArrXX& a, const ArrXX& b);

} // namespace hsr::testing
