#include "hsr/loss/losses.hpp"

#include "hsr/error.hpp"

#include <algorithm>
#include <cmath>

namespace hsr {

namespace {

constexpr int kWin = 11;
constexpr int kHalf = kWin / 2;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;

const std::array<double, kWin>& window_kernel() {
    static const std::array<double, kWin> kern = [] {
        std::array<double, kWin> k{};
        double sum = 0.0;
        for (int i = 0; i < kWin; ++i) {
            const double d = i - kHalf;
            k[i] = std::exp(-d * d / (2.0 * 1.5 * 1.5));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return kern;
}

// Separable valid-mode correlation with the 11-tap window.
ArrXX filter_valid(const ArrXX& x) {
    const auto& kern = window_kernel();
    const Index h = x.rows(), w = x.cols();
    ArrXX rows(h, w - 2 * kHalf);
    rows.setZero();
    for (int k = 0; k < kWin; ++k)
        rows += kern[k] * x.block(0, k, h, w - 2 * kHalf);
    ArrXX out(h - 2 * kHalf, w - 2 * kHalf);
    out.setZero();
    for (int k = 0; k < kWin; ++k)
        out += kern[k] * rows.block(k, 0, h - 2 * kHalf, w - 2 * kHalf);
    return out;
}

// Adjoint of filter_valid: scatter a coefficient map over the window support.
ArrXX scatter_full(const ArrXX& m, Index h, Index w) {
    const auto& kern = window_kernel();
    ArrXX rows = ArrXX::Zero(h, m.cols());
    for (int k = 0; k < kWin; ++k)
        rows.block(k, 0, m.rows(), m.cols()) += kern[k] * m;
    ArrXX out = ArrXX::Zero(h, w);
    for (int k = 0; k < kWin; ++k)
        out.block(0, k, h, m.cols()) += kern[k] * rows;
    return out;
}

void require_same_shape(const Image& a, const Image& b, const char* who) {
    if (!a.same_shape(b)) throw PreconditionError(std::string(who) + ": image shape mismatch");
}

struct SsimChannel {
    ArrXX map;                      // per-window SSIM
    ArrXX mx, my, sxx, sxy;         // filtered moments (valid size)
    ArrXX a1, a2, b1, b2;
};

SsimChannel ssim_channel(const ArrXX& x, const ArrXX& y) {
    SsimChannel s;
    s.mx = filter_valid(x);
    s.my = filter_valid(y);
    s.sxx = filter_valid(x * x);
    const ArrXX syy = filter_valid(y * y);
    s.sxy = filter_valid(x * y);
    const ArrXX vx = s.sxx - s.mx * s.mx;
    const ArrXX vy = syy - s.my * s.my;
    const ArrXX cov = s.sxy - s.mx * s.my;
    s.a1 = 2.0 * s.mx * s.my + kC1;
    s.a2 = 2.0 * cov + kC2;
    s.b1 = s.mx * s.mx + s.my * s.my + kC1;
    s.b2 = vx + vy + kC2;
    s.map = (s.a1 * s.a2) / (s.b1 * s.b2);
    return s;
}

// d(mean over coefficient-weighted windows of ssim)/dx given per-window
// coefficients. Returns an H x W gradient image for one channel.
ArrXX ssim_channel_gradient(const ArrXX& x, const ArrXX& y, const SsimChannel& s,
                            const ArrXX& coef) {
    const ArrXX inv_b1b2 = 1.0 / (s.b1 * s.b2);
    // Total derivative with respect to the filtered moments mx, sxx, sxy.
    const ArrXX ds_dmx = 2.0 * s.my * (s.a2 - s.a1) * inv_b1b2 +
                         2.0 * s.mx * s.map * (1.0 / s.b2 - 1.0 / s.b1);
    const ArrXX ds_dsxx = -s.map / s.b2;
    const ArrXX ds_dsxy = 2.0 * s.a1 * inv_b1b2;

    const Index h = x.rows(), w = x.cols();
    return scatter_full(coef * ds_dmx, h, w) + 2.0 * x * scatter_full(coef * ds_dsxx, h, w) +
           y * scatter_full(coef * ds_dsxy, h, w);
}

void check_window_fit(const Image& a, const char* who) {
    if (a.height() < kWin || a.width() < kWin)
        throw PreconditionError(std::string(who) + ": image smaller than the 11x11 window");
}

ArrXX pool2(const ArrXX& x) {
    const Index h = (x.rows() + 1) / 2, w = (x.cols() + 1) / 2;
    ArrXX out(h, w);
    for (Index y = 0; y < h; ++y) {
        for (Index c = 0; c < w; ++c) {
            double sum = 0.0;
            int cnt = 0;
            for (Index dy = 2 * y; dy < std::min<Index>(2 * y + 2, x.rows()); ++dy)
                for (Index dx = 2 * c; dx < std::min<Index>(2 * c + 2, x.cols()); ++dx) {
                    sum += x(dy, dx);
                    ++cnt;
                }
            out(y, c) = sum / cnt;
        }
    }
    return out;
}

// Adjoint of pool2.
ArrXX unpool2(const ArrXX& g, Index h, Index w) {
    ArrXX out = ArrXX::Zero(h, w);
    for (Index y = 0; y < g.rows(); ++y) {
        for (Index c = 0; c < g.cols(); ++c) {
            int cnt = 0;
            for (Index dy = 2 * y; dy < std::min<Index>(2 * y + 2, h); ++dy)
                for (Index dx = 2 * c; dx < std::min<Index>(2 * c + 2, w); ++dx) {
                    (void)dx;
                    ++cnt;
                }
            const double share = g(y, c) / cnt;
            for (Index dy = 2 * y; dy < std::min<Index>(2 * y + 2, h); ++dy)
                for (Index dx = 2 * c; dx < std::min<Index>(2 * c + 2, w); ++dx)
                    out(dy, dx) += share;
        }
    }
    return out;
}

} // namespace

void LossWeights::validate() const {
    const double vals[] = {lambda1, lambda2, lambda3, omega, alpha, beta};
    for (double v : vals)
        if (!std::isfinite(v) || v < 0.0)
            throw PreconditionError("LossWeights: weights must be finite and non-negative");
}

PixelBox PixelBox::clipped(int width, int height) const {
    PixelBox out;
    out.x0 = std::clamp(x0, 0, width);
    out.x1 = std::clamp(x1, 0, width);
    out.y0 = std::clamp(y0, 0, height);
    out.y1 = std::clamp(y1, 0, height);
    return out;
}

bool RegionSet::contains(int x, int y) const {
    for (const PixelBox& b : boxes)
        if (b.contains(x, y)) return true;
    return false;
}

void RegionSet::validate(int width, int height) const {
    for (const PixelBox& b : boxes) {
        if (!b.valid()) throw PreconditionError("RegionSet: empty or inverted box");
        if (b.x0 < 0 || b.y0 < 0 || b.x1 > width || b.y1 > height)
            throw PreconditionError("RegionSet: box outside image bounds");
    }
}

GrayImage RegionSet::membership_mask(int width, int height) const {
    GrayImage m = GrayImage::Zero(height, width);
    for (const PixelBox& b : boxes) {
        const PixelBox c = b.clipped(width, height);
        if (c.valid()) m.block(c.y0, c.x0, c.y1 - c.y0, c.x1 - c.x0).setOnes();
    }
    return m;
}

double l1_color_loss(const Image& pred, const Image& target) {
    require_same_shape(pred, target, "l1_color_loss");
    const double n = 3.0 * pred.height() * pred.width();
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) sum += (pred.channel(c) - target.channel(c)).abs().sum();
    return sum / n;
}

double mask_loss(const GrayImage& pred_alpha, const GrayImage& target_mask, bool squared) {
    if (pred_alpha.rows() != target_mask.rows() || pred_alpha.cols() != target_mask.cols())
        throw PreconditionError("mask_loss: shape mismatch");
    const double mse = (pred_alpha - target_mask).square().mean();
    return squared ? mse : std::sqrt(mse);
}

ArrXX ssim_map_channel(const ArrXX& a, const ArrXX& b) {
    if (a.rows() < kWin || a.cols() < kWin)
        throw PreconditionError("ssim_map_channel: image smaller than the 11x11 window");
    return ssim_channel(a, b).map;
}

double ssim(const Image& a, const Image& b) {
    require_same_shape(a, b, "ssim");
    check_window_fit(a, "ssim");
    double total = 0.0;
    for (int c = 0; c < 3; ++c) total += ssim_channel(a.channel(c), b.channel(c)).map.mean();
    return total / 3.0;
}

double ssim_loss(const Image& a, const Image& b, bool literal) {
    const double s = ssim(a, b);
    return literal ? s : 1.0 - s;
}

double PyramidPerceptual::value(const Image& pred, const Image& target) const {
    require_same_shape(pred, target, "perceptual_loss");
    double total = 0.0;
    for (int c = 0; c < 3; ++c) {
        ArrXX p = pred.channel(c), t = target.channel(c);
        for (int level = 0; level < levels_; ++level) {
            total += (p - t).square().mean();
            if (level + 1 < levels_) {
                p = pool2(p);
                t = pool2(t);
            }
        }
    }
    return total / (3.0 * levels_);
}

Image PyramidPerceptual::gradient(const Image& pred, const Image& target) const {
    require_same_shape(pred, target, "perceptual_loss");
    Image out(pred.height(), pred.width());
    for (int c = 0; c < 3; ++c) {
        std::vector<ArrXX> p_levels, t_levels;
        p_levels.push_back(pred.channel(c));
        t_levels.push_back(target.channel(c));
        for (int level = 1; level < levels_; ++level) {
            p_levels.push_back(pool2(p_levels.back()));
            t_levels.push_back(pool2(t_levels.back()));
        }
        for (int level = levels_ - 1; level >= 0; --level) {
            ArrXX g = 2.0 * (p_levels[level] - t_levels[level]) /
                      (static_cast<double>(p_levels[level].size()) * 3.0 * levels_);
            for (int up = level; up > 0; --up)
                g = unpool2(g, p_levels[up - 1].rows(), p_levels[up - 1].cols());
            out.channel(c) += g;
        }
    }
    return out;
}

ArrXX PyramidPerceptual::pixel_map(const Image& pred, const Image& target) const {
    require_same_shape(pred, target, "perceptual_loss");
    ArrXX m = ArrXX::Zero(pred.height(), pred.width());
    for (int c = 0; c < 3; ++c) m += (pred.channel(c) - target.channel(c)).square();
    return m / 3.0;
}

double perceptual_loss(const Image& pred, const Image& target, const PerceptualBackend* backend) {
    if (!backend)
        throw PreconditionError("perceptual_loss: no backend installed and the default is disabled");
    return backend->value(pred, target);
}

double combine_recon_components(double l1, double mask, double ssim_term, double perceptual,
                                const LossWeights& w) {
    w.validate();
    return l1 + w.lambda1 * mask + w.lambda2 * ssim_term + w.lambda3 * perceptual;
}

ReconBreakdown recon_loss(const Image& pred, const Image& target_img,
                          const GrayImage* target_mask, const GrayImage& pred_alpha,
                          const LossWeights& w, const PerceptualBackend* backend) {
    ReconBreakdown out;
    out.l1 = l1_color_loss(pred, target_img);
    out.mask = target_mask ? mask_loss(pred_alpha, *target_mask, w.mask_squared) : 0.0;
    out.ssim_term = ssim_loss(pred, target_img, w.ssim_literal);
    out.perceptual = backend ? backend->value(pred, target_img) : 0.0;
    out.total = combine_recon_components(out.l1, out.mask, out.ssim_term, out.perceptual, w);
    return out;
}

PixelLossMaps make_pixel_loss_maps(const Image& pred, const Image& target_img,
                                   const GrayImage* target_mask, const GrayImage& pred_alpha,
                                   const LossWeights& w, const PerceptualBackend* backend) {
    require_same_shape(pred, target_img, "make_pixel_loss_maps");
    check_window_fit(pred, "make_pixel_loss_maps");
    const Index h = pred.height(), wd = pred.width();

    PixelLossMaps maps;
    maps.l1 = ArrXX::Zero(h, wd);
    for (int c = 0; c < 3; ++c) maps.l1 += (pred.channel(c) - target_img.channel(c)).abs();
    maps.l1 /= 3.0;

    maps.mask = target_mask ? ArrXX((pred_alpha - *target_mask).square())
                            : ArrXX(ArrXX::Zero(h, wd));

    // Local SSIM term at the window center, border-replicated to full size.
    ArrXX valid = ArrXX::Zero(h - 2 * kHalf, wd - 2 * kHalf);
    for (int c = 0; c < 3; ++c)
        valid += ssim_channel(pred.channel(c), target_img.channel(c)).map;
    valid /= 3.0;
    maps.ssim = ArrXX::Zero(h, wd);
    for (Index y = 0; y < h; ++y) {
        const Index vy = std::clamp<Index>(y - kHalf, 0, valid.rows() - 1);
        for (Index x = 0; x < wd; ++x) {
            const Index vx = std::clamp<Index>(x - kHalf, 0, valid.cols() - 1);
            maps.ssim(y, x) = w.ssim_literal ? valid(vy, vx) : 1.0 - valid(vy, vx);
        }
    }

    maps.perceptual = backend ? backend->pixel_map(pred, target_img) : ArrXX(ArrXX::Zero(h, wd));
    return maps;
}

double region_weighted_loss(double recon_total, const PixelLossMaps& maps,
                            const RegionSet& regions, const LossWeights& w) {
    w.validate();
    if (regions.empty() || w.omega == 0.0) return recon_total;
    const Index h = maps.l1.rows(), wd = maps.l1.cols();
    regions.validate(static_cast<int>(wd), static_cast<int>(h));
    const GrayImage mask = regions.membership_mask(static_cast<int>(wd), static_cast<int>(h));
    const double region_sum =
        (mask * (maps.l1 + w.lambda1 * maps.mask + w.lambda2 * maps.ssim +
                 w.lambda3 * maps.perceptual))
            .sum();
    return recon_total + w.omega * region_sum;
}

double frame_diff_loss(const std::vector<Image>& pred_seq,
                       const std::vector<Image>& target_seq) {
    if (pred_seq.size() != target_seq.size())
        throw PreconditionError("frame_diff_loss: sequence length mismatch");
    if (pred_seq.size() < 2)
        throw PreconditionError("frame_diff_loss: need at least two frames");
    double total = 0.0;
    for (size_t i = 0; i + 1 < pred_seq.size(); ++i) {
        require_same_shape(pred_seq[i], pred_seq[i + 1], "frame_diff_loss");
        require_same_shape(pred_seq[i], target_seq[i], "frame_diff_loss");
        const double n = 3.0 * pred_seq[i].height() * pred_seq[i].width();
        double frame = 0.0;
        for (int c = 0; c < 3; ++c) {
            frame += ((pred_seq[i + 1].channel(c) - pred_seq[i].channel(c)) -
                      (target_seq[i + 1].channel(c) - target_seq[i].channel(c)))
                         .abs()
                         .sum();
        }
        total += frame / n;
    }
    return total / static_cast<double>(pred_seq.size() - 1);
}

double combine_harmonizer_components(double l1, double perceptual, double diff, double gan,
                                     const LossWeights& w) {
    w.validate();
    return l1 + perceptual + w.alpha * diff + w.beta * gan;
}

HarmonizerBreakdown total_harmonizer_loss(const std::vector<Image>& pred_seq,
                                          const std::vector<Image>& target_seq, double gan_term,
                                          const LossWeights& w,
                                          const PerceptualBackend* backend) {
    if (pred_seq.size() != target_seq.size() || pred_seq.empty())
        throw PreconditionError("total_harmonizer_loss: sequence length mismatch");
    HarmonizerBreakdown out;
    for (size_t i = 0; i < pred_seq.size(); ++i) {
        out.l1 += l1_color_loss(pred_seq[i], target_seq[i]);
        out.perceptual += backend ? backend->value(pred_seq[i], target_seq[i]) : 0.0;
    }
    out.l1 /= static_cast<double>(pred_seq.size());
    out.perceptual /= static_cast<double>(pred_seq.size());
    out.diff = pred_seq.size() >= 2 ? frame_diff_loss(pred_seq, target_seq) : 0.0;
    out.gan = gan_term;
    out.total = combine_harmonizer_components(out.l1, out.perceptual, out.diff, out.gan, w);
    return out;
}

double psnr(const Image& pred, const Image& target) {
    require_same_shape(pred, target, "psnr");
    double mse = 0.0;
    for (int c = 0; c < 3; ++c) mse += (pred.channel(c) - target.channel(c)).square().sum();
    mse /= 3.0 * pred.height() * pred.width();
    if (mse < 1e-12) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

ImageLossResult image_loss(const Image& pred, const GrayImage& pred_alpha,
                           const Image& target_img, const GrayImage* target_mask,
                           const LossWeights& w, const PerceptualBackend* backend,
                           const RegionSet* regions, LossGrads* grads) {
    w.validate();
    require_same_shape(pred, target_img, "image_loss");
    check_window_fit(pred, "image_loss");
    const Index h = pred.height(), wd = pred.width();
    const bool use_regions = regions && !regions->empty() && w.omega > 0.0;
    if (use_regions) regions->validate(static_cast<int>(wd), static_cast<int>(h));

    ImageLossResult result;
    result.breakdown = recon_loss(pred, target_img, target_mask, pred_alpha, w, backend);

    GrayImage region_mask;
    if (use_regions) {
        region_mask = regions->membership_mask(static_cast<int>(wd), static_cast<int>(h));
        const PixelLossMaps maps =
            make_pixel_loss_maps(pred, target_img, target_mask, pred_alpha, w, backend);
        result.region_term =
            w.omega * (region_mask * (maps.l1 + w.lambda1 * maps.mask + w.lambda2 * maps.ssim +
                                      w.lambda3 * maps.perceptual))
                          .sum();
    }
    result.total = result.breakdown.total + result.region_term;
    if (!grads) return result;

    grads->d_color = Image(h, wd);
    grads->d_alpha = GrayImage::Zero(h, wd);
    const double n_px = static_cast<double>(h) * static_cast<double>(wd);

    // L1 term: global mean plus the per-pixel region sum.
    for (int c = 0; c < 3; ++c) {
        ArrXX sign = (pred.channel(c) - target_img.channel(c)).sign();
        ArrXX coeff = ArrXX::Constant(h, wd, 1.0 / (3.0 * n_px));
        if (use_regions) coeff += (w.omega / 3.0) * region_mask;
        grads->d_color.channel(c) += sign * coeff;
    }

    // Mask term.
    if (target_mask) {
        const ArrXX diff = pred_alpha - *target_mask;
        if (w.mask_squared) {
            grads->d_alpha += w.lambda1 * 2.0 * diff / n_px;
        } else {
            const double root = std::sqrt(diff.square().mean());
            if (root > 1e-12) grads->d_alpha += w.lambda1 * diff / (n_px * root);
        }
        if (use_regions) grads->d_alpha += w.omega * w.lambda1 * 2.0 * diff * region_mask;
    }

    // SSIM term. Per-window coefficients fold the global mean and region
    // amplification (with border-replication multiplicity) together.
    {
        const Index vh = h - 2 * kHalf, vw = wd - 2 * kHalf;
        ArrXX coef = ArrXX::Constant(vh, vw, 1.0 / static_cast<double>(vh * vw));
        if (use_regions) {
            for (Index y = 0; y < h; ++y) {
                const Index vy = std::clamp<Index>(y - kHalf, 0, vh - 1);
                for (Index x = 0; x < wd; ++x) {
                    if (region_mask(y, x) == 0.0) continue;
                    const Index vx = std::clamp<Index>(x - kHalf, 0, vw - 1);
                    coef(vy, vx) += w.omega;
                }
            }
        }
        const double orient = w.ssim_literal ? 1.0 : -1.0; // d(1 - s) = -ds
        for (int c = 0; c < 3; ++c) {
            const SsimChannel sc = ssim_channel(pred.channel(c), target_img.channel(c));
            grads->d_color.channel(c) += (orient * w.lambda2 / 3.0) *
                                         ssim_channel_gradient(pred.channel(c),
                                                               target_img.channel(c), sc, coef);
        }
    }

    // Perceptual term.
    if (backend) {
        const Image pg = backend->gradient(pred, target_img);
        for (int c = 0; c < 3; ++c) grads->d_color.channel(c) += w.lambda3 * pg.channel(c);
        if (use_regions) {
            // Finest-level squared-error map: d/dpred = 2 diff / 3 per channel.
            for (int c = 0; c < 3; ++c) {
                grads->d_color.channel(c) += w.omega * w.lambda3 * (2.0 / 3.0) *
                                             (pred.channel(c) - target_img.channel(c)) *
                                             region_mask;
            }
        }
    }
    return result;
}

} // namespace hsr
