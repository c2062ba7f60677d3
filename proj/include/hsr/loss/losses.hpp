#pragma once

#include "hsr/core/types.hpp"
#include "hsr/error.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace hsr {

/// Objective weights. lambda1..3 scale the mask/SSIM/perceptual terms of the
/// reconstruction loss, omega amplifies flagged regions, alpha/beta weigh the
/// frame-difference and adversarial terms of the sequence loss.
struct LossWeights {
    double lambda1 = 0.5;
    double lambda2 = 0.01;
    double lambda3 = 0.01;
    double omega = 5.0;
    double alpha = 0.5;
    double beta = 0.025;

    // Resolved ambiguities, kept switchable.
    bool ssim_literal = false; // minimize SSIM itself rather than 1 - SSIM
    bool mask_squared = false; // mean squared error instead of its root

    void validate() const; // all finite and >= 0
};

/// Axis-aligned pixel rectangle, half-open: x0 <= x < x1, y0 <= y < y1.
struct PixelBox {
    int x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    bool contains(int x, int y) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
    int area() const { return (x1 - x0) * (y1 - y0); }
    PixelBox clipped(int width, int height) const;
    bool valid() const { return x0 < x1 && y0 < y1; }
};

/// Set of high-importance pixels, represented as a union of boxes. Membership
/// is a pure test: overlapping boxes never double-count a pixel.
struct RegionSet {
    std::vector<PixelBox> boxes;

    bool empty() const { return boxes.empty(); }
    bool contains(int x, int y) const;
    void validate(int width, int height) const; // boxes must lie in bounds
    GrayImage membership_mask(int width, int height) const; // 1 inside, 0 outside
};

// ---------------------------------------------------------------------------
// Scalar losses
// ---------------------------------------------------------------------------

/// Mean absolute difference over all pixels and channels.
double l1_color_loss(const Image& pred, const Image& target);

/// Root (or plain, when `squared`) mean squared difference between the
/// rendered density map and a binary mask.
double mask_loss(const GrayImage& pred_alpha, const GrayImage& target_mask,
                 bool squared = false);

/// Mean local structural similarity: 11x11 Gaussian window (sigma 1.5),
/// K1 = 0.01, K2 = 0.03, unit dynamic range, valid windows only, channels
/// averaged. Throws if either dimension is below the window size.
double ssim(const Image& a, const Image& b);

/// Per-window SSIM map of one channel, (H-10) x (W-10).
ArrXX ssim_map_channel(const ArrXX& a, const ArrXX& b);

/// 1 - ssim(a, b) (or ssim itself when `literal`).
double ssim_loss(const Image& a, const Image& b, bool literal = false);

/// Pluggable perceptual metric. The default backend is a 3-level
/// average-pooled pyramid mean squared error; it is a stand-in with the same
/// zero-at-identity contract as a learned perceptual metric, not a learned
/// metric itself.
class PerceptualBackend {
public:
    virtual ~PerceptualBackend() = default;
    virtual std::string name() const = 0;
    virtual double value(const Image& pred, const Image& target) const = 0;
    /// d value / d pred.
    virtual Image gradient(const Image& pred, const Image& target) const = 0;
    /// Per-pixel decomposition used by region weighting (finest level).
    virtual ArrXX pixel_map(const Image& pred, const Image& target) const = 0;
};

class PyramidPerceptual final : public PerceptualBackend {
public:
    explicit PyramidPerceptual(int levels = 3) : levels_(levels) {}
    std::string name() const override { return "pyramid"; }
    double value(const Image& pred, const Image& target) const override;
    Image gradient(const Image& pred, const Image& target) const override;
    ArrXX pixel_map(const Image& pred, const Image& target) const override;

private:
    int levels_;
};

/// The installed backend, or throws when backend is null (default disabled).
double perceptual_loss(const Image& pred, const Image& target,
                       const PerceptualBackend* backend);

/// Weighted combination of reconstruction components:
/// total = l1 + lambda1 * mask + lambda2 * ssim + lambda3 * perceptual.
double combine_recon_components(double l1, double mask, double ssim_term, double perceptual,
                                const LossWeights& w);

struct ReconBreakdown {
    double l1 = 0;
    double mask = 0;
    double ssim_term = 0;
    double perceptual = 0;
    double total = 0;
};

/// Full reconstruction objective. `target_mask` may be null (mask term
/// skipped, e.g. for enhancer-produced views without segmentation).
ReconBreakdown recon_loss(const Image& pred, const Image& target_img,
                          const GrayImage* target_mask, const GrayImage& pred_alpha,
                          const LossWeights& w, const PerceptualBackend* backend);

/// Per-pixel decompositions of the reconstruction terms (H x W each):
/// l1 = channel-mean absolute difference, mask = squared difference,
/// ssim = 1 - local SSIM at the (border-clamped) window center, perceptual =
/// the backend's finest-level squared-error map.
struct PixelLossMaps {
    ArrXX l1;
    ArrXX mask; // zero when no mask was supplied
    ArrXX ssim;
    ArrXX perceptual;
};

PixelLossMaps make_pixel_loss_maps(const Image& pred, const Image& target_img,
                                   const GrayImage* target_mask, const GrayImage& pred_alpha,
                                   const LossWeights& w, const PerceptualBackend* backend);

/// Region-amplified objective:
/// recon_total + omega * sum over region pixels of the weighted map terms.
/// An empty region set (or omega = 0) returns recon_total unchanged.
double region_weighted_loss(double recon_total, const PixelLossMaps& maps,
                            const RegionSet& regions, const LossWeights& w);

/// Mean L1 of consecutive-frame difference residuals between two sequences.
double frame_diff_loss(const std::vector<Image>& pred_seq, const std::vector<Image>& target_seq);

/// total = l1 + perceptual + alpha * diff + beta * gan.
double combine_harmonizer_components(double l1, double perceptual, double diff, double gan,
                                     const LossWeights& w);

struct HarmonizerBreakdown {
    double l1 = 0;
    double perceptual = 0;
    double diff = 0;
    double gan = 0;
    double total = 0;
};

/// Sequence objective with an externally supplied adversarial term.
HarmonizerBreakdown total_harmonizer_loss(const std::vector<Image>& pred_seq,
                                          const std::vector<Image>& target_seq, double gan_term,
                                          const LossWeights& w,
                                          const PerceptualBackend* backend);

/// 10 log10(1 / MSE) in decibels; +infinity sentinel below MSE 1e-12.
double psnr(const Image& pred, const Image& target);

// ---------------------------------------------------------------------------
// Differentiable entry point used by the trainer
// ---------------------------------------------------------------------------

struct LossGrads {
    Image d_color;
    GrayImage d_alpha;
};

struct ImageLossResult {
    ReconBreakdown breakdown;
    double region_term = 0.0;
    double total = 0.0; // breakdown.total + region_term
};

/// Evaluates the (optionally region-weighted) reconstruction objective and
/// its gradient with respect to the rendered color and alpha images.
ImageLossResult image_loss(const Image& pred, const GrayImage& pred_alpha,
                           const Image& target_img, const GrayImage* target_mask,
                           const LossWeights& w, const PerceptualBackend* backend,
                           const RegionSet* regions, LossGrads* grads);

} // namespace hsr
