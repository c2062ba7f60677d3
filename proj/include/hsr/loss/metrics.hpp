#pragma once

#include "hsr/loss/losses.hpp"

#include <vector>

namespace hsr {

struct ViewMetrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double perceptual = 0.0;
};

struct EvalReport {
    std::vector<ViewMetrics> per_view;
    ViewMetrics mean;
};

/// Fill in the mean row (infinite PSNR entries propagate to an infinite mean).
EvalReport make_eval_report(std::vector<ViewMetrics> per_view);

} // namespace hsr
