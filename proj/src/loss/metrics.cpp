#include "hsr/loss/metrics.hpp"

#include "hsr/error.hpp"

namespace hsr {

EvalReport make_eval_report(std::vector<ViewMetrics> per_view) {
    if (per_view.empty()) throw PreconditionError("make_eval_report: no views");
    EvalReport out;
    out.per_view = std::move(per_view);
    for (const ViewMetrics& v : out.per_view) {
        out.mean.psnr += v.psnr;
        out.mean.ssim += v.ssim;
        out.mean.perceptual += v.perceptual;
    }
    const double n = static_cast<double>(out.per_view.size());
    out.mean.psnr /= n;
    out.mean.ssim /= n;
    out.mean.perceptual /= n;
    return out;
}

} // namespace hsr
