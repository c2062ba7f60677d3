#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsr/loss/losses.hpp"
#include "support/oracles.hpp"

using namespace hsr;
using namespace hsr::testing;

namespace {

Image random_image(Index h, Index w, Rng& rng, double lo = 0.0, double hi = 1.0) {
    Image img(h, w);
    for (int c = 0; c < 3; ++c)
        for (Index y = 0; y < h; ++y)
            for (Index x = 0; x < w; ++x) img.channel(c)(y, x) = rng.uniform(lo, hi);
    return img;
}

Image constant_image(Index h, Index w, double v) { return Image(h, w, v); }

} // namespace

TEST_CASE("l1_color_loss") {
    Rng rng(1);
    const Image a = random_image(8, 8, rng);
    CHECK(l1_color_loss(a, a) == 0.0);

    Image b = a;
    for (int c = 0; c < 3; ++c) b.channel(c) += 0.1;
    CHECK(l1_color_loss(a, b) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(l1_color_loss(a, b) == l1_color_loss(b, a));

    Image wrong(4, 4);
    CHECK_THROWS_AS(l1_color_loss(a, wrong), PreconditionError);
}

TEST_CASE("mask_loss") {
    GrayImage perfect = GrayImage::Ones(6, 6);
    CHECK(mask_loss(perfect, perfect) == 0.0);

    GrayImage half = GrayImage::Constant(6, 6, 0.5);
    CHECK(mask_loss(half, perfect) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(mask_loss(half, perfect, /*squared=*/true) == doctest::Approx(0.25).epsilon(1e-12));

    // Bounded by 1 for valid inputs.
    Rng rng(2);
    GrayImage pred(6, 6), target(6, 6);
    for (Index i = 0; i < 36; ++i) {
        pred.data()[i] = rng.uniform();
        target.data()[i] = rng.uniform() > 0.5 ? 1.0 : 0.0;
    }
    CHECK(mask_loss(pred, target) <= 1.0);
    CHECK_THROWS_AS(mask_loss(pred, GrayImage::Zero(3, 3)), PreconditionError);
}

TEST_CASE("ssim") {
    Rng rng(3);

    SUBCASE("self similarity is exactly one") {
        const Image x = random_image(16, 16, rng);
        CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("constant images hit the closed-form stabilizer value") {
        const Image zero = constant_image(12, 12, 0.0);
        const Image one = constant_image(12, 12, 1.0);
        // mu_x = 0, mu_y = 1, all (co)variances 0:
        // ssim = C1 / (1 + C1) with C1 = 1e-4.
        const double expect = 1e-4 / (1.0 + 1e-4);
        CHECK(ssim(zero, one) == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("agrees with the brute-force sliding-window oracle") {
        for (int trial = 0; trial < 20; ++trial) {
            const Image a = random_image(32, 32, rng);
            Image b = random_image(32, 32, rng);
            if (trial % 3 == 0) {
                b = a;
                b.r += 0.05; // correlated pair
            }
            CHECK(std::abs(ssim(a, b) - ssim_oracle(a, b)) < 1e-6);
        }
    }

    SUBCASE("images below the window size are rejected") {
        const Image tiny = constant_image(8, 8, 0.5);
        CHECK_THROWS_AS(ssim(tiny, tiny), PreconditionError);
    }
}

TEST_CASE("ssim_loss") {
    Rng rng(4);
    const Image a = random_image(20, 20, rng);
    CHECK(ssim_loss(a, a) == doctest::Approx(0.0).epsilon(1e-9));

    const Image b = random_image(20, 20, rng);
    CHECK(ssim_loss(a, b) == doctest::Approx(1.0 - ssim(a, b)).epsilon(1e-12));
    CHECK(ssim_loss(a, b, /*literal=*/true) == doctest::Approx(ssim(a, b)).epsilon(1e-12));

    // Monotone decrease as b blends toward a.
    double prev = ssim_loss(a, b);
    for (int step = 1; step <= 10; ++step) {
        const double t = step / 10.0;
        Image mix(20, 20);
        for (int c = 0; c < 3; ++c)
            mix.channel(c) = (1.0 - t) * b.channel(c) + t * a.channel(c);
        const double cur = ssim_loss(a, mix);
        CHECK(cur <= prev + 1e-9);
        prev = cur;
    }
}

TEST_CASE("perceptual_loss default pyramid backend") {
    PyramidPerceptual backend;

    SUBCASE("zero at identity") {
        Rng rng(5);
        const Image a = random_image(8, 8, rng);
        CHECK(backend.value(a, a) == 0.0);
    }

    SUBCASE("hand-computed 2x2 case") {
        Image pred(2, 2), target(2, 2);
        pred.r(0, 0) = 1.0; // single lit pixel in the red channel
        // Level 0 MSE: 0.25. Level 1 (1x1 pool): 0.0625. Level 2: 0.0625.
        // value = (0.25 + 0.0625 + 0.0625) / (3 channels * 3 levels).
        CHECK(backend.value(pred, target) == doctest::Approx(0.375 / 9.0).epsilon(1e-12));
    }

    SUBCASE("constant channel offsets") {
        Image pred(4, 4), target(4, 4);
        pred.r += 0.1;
        pred.g += 0.2;
        pred.b += 0.3;
        const double expect = (0.01 + 0.04 + 0.09) / 3.0; // level MSEs are equal
        CHECK(backend.value(pred, target) == doctest::Approx(expect).epsilon(1e-12));
    }

    SUBCASE("missing backend is an error") {
        const Image a = constant_image(4, 4, 0.2);
        CHECK_THROWS_AS(perceptual_loss(a, a, nullptr), PreconditionError);
        CHECK(perceptual_loss(a, a, &backend) == 0.0);
    }
}

TEST_CASE("recon_loss arithmetic") {
    LossWeights w; // lambda1 = 0.5, lambda2 = lambda3 = 0.01

    SUBCASE("component combination reproduces 0.207") {
        CHECK(combine_recon_components(0.1, 0.2, 0.3, 0.4, w) ==
              doctest::Approx(0.207).epsilon(1e-12));
    }

    SUBCASE("perfect reconstruction is zero") {
        Rng rng(6);
        const Image img = random_image(16, 16, rng);
        const GrayImage mask = GrayImage::Ones(16, 16);
        PyramidPerceptual backend;
        const ReconBreakdown r = recon_loss(img, img, &mask, mask, w, &backend);
        CHECK(r.total == doctest::Approx(0.0).epsilon(1e-9));
    }

    SUBCASE("zero lambdas reduce to the L1 term") {
        Rng rng(7);
        const Image a = random_image(16, 16, rng);
        const Image b = random_image(16, 16, rng);
        const GrayImage mask = GrayImage::Ones(16, 16);
        LossWeights zero;
        zero.lambda1 = zero.lambda2 = zero.lambda3 = 0.0;
        const ReconBreakdown r = recon_loss(a, b, &mask, mask, zero, nullptr);
        CHECK(r.total == doctest::Approx(l1_color_loss(a, b)).epsilon(1e-12));
    }

    SUBCASE("linear in each lambda") {
        Rng rng(8);
        const Image a = random_image(16, 16, rng);
        const Image b = random_image(16, 16, rng);
        GrayImage alpha(16, 16), mask(16, 16);
        for (Index i = 0; i < alpha.size(); ++i) {
            alpha.data()[i] = rng.uniform();
            mask.data()[i] = rng.uniform() > 0.5 ? 1.0 : 0.0;
        }
        PyramidPerceptual backend;
        const ReconBreakdown r1 = recon_loss(a, b, &mask, alpha, w, &backend);
        LossWeights w2 = w;
        w2.lambda1 *= 2;
        w2.lambda2 *= 2;
        w2.lambda3 *= 2;
        const ReconBreakdown r2 = recon_loss(a, b, &mask, alpha, w2, &backend);
        CHECK(r2.total - r1.total ==
              doctest::Approx(w.lambda1 * r1.mask + w.lambda2 * r1.ssim_term +
                              w.lambda3 * r1.perceptual)
                  .epsilon(1e-9));
    }
}

TEST_CASE("region_weighted_loss") {
    LossWeights w;
    w.omega = 2.0;

    PixelLossMaps maps;
    maps.l1 = ArrXX::Zero(12, 12);
    maps.mask = ArrXX::Zero(12, 12);
    maps.ssim = ArrXX::Zero(12, 12);
    maps.perceptual = ArrXX::Zero(12, 12);

    SUBCASE("empty region set or zero omega return recon unchanged") {
        RegionSet empty;
        CHECK(region_weighted_loss(0.42, maps, empty, w) == 0.42);
        RegionSet some;
        some.boxes.push_back({0, 0, 4, 4});
        LossWeights w0 = w;
        w0.omega = 0.0;
        maps.l1.setOnes();
        CHECK(region_weighted_loss(0.42, maps, some, w0) == 0.42);
    }

    SUBCASE("single 1x1 region sums by hand") {
        maps.l1(2, 3) = 0.7;        // pixel x=3, y=2
        maps.mask(2, 3) = 0.5;
        maps.ssim(2, 3) = 0.25;
        maps.perceptual(2, 3) = 0.1;
        RegionSet r;
        r.boxes.push_back({3, 2, 4, 3});
        const double expect =
            1.0 + 2.0 * (0.7 + w.lambda1 * 0.5 + w.lambda2 * 0.25 + w.lambda3 * 0.1);
        CHECK(region_weighted_loss(1.0, maps, r, w) == doctest::Approx(expect).epsilon(1e-12));
    }

    SUBCASE("overlapping boxes count pixels once") {
        maps.l1.setOnes();
        RegionSet r;
        r.boxes.push_back({0, 0, 4, 4});
        r.boxes.push_back({2, 2, 6, 6});
        // Brute-force union on the pixel grid.
        int count = 0;
        for (int y = 0; y < 12; ++y)
            for (int x = 0; x < 12; ++x)
                if (r.contains(x, y)) ++count;
        CHECK(count == 28);
        CHECK(region_weighted_loss(0.0, maps, r, w) ==
              doctest::Approx(w.omega * count).epsilon(1e-12));
    }

    SUBCASE("monotone non-decreasing in omega") {
        maps.l1.setConstant(0.3);
        RegionSet r;
        r.boxes.push_back({1, 1, 5, 7});
        double prev = -1.0;
        for (double omega : {0.0, 0.5, 1.0, 5.0, 25.0}) {
            LossWeights wo = w;
            wo.omega = omega;
            const double v = region_weighted_loss(1.0, maps, r, wo);
            CHECK(v >= prev);
            prev = v;
        }
    }

    SUBCASE("out-of-bounds boxes are rejected") {
        RegionSet r;
        r.boxes.push_back({-1, 0, 4, 4});
        maps.l1.setOnes();
        CHECK_THROWS_AS(region_weighted_loss(0.0, maps, r, w), PreconditionError);
    }
}

TEST_CASE("frame_diff_loss") {
    Rng rng(9);
    std::vector<Image> target;
    for (int i = 0; i < 4; ++i) target.push_back(random_image(6, 6, rng));

    SUBCASE("identical sequences give zero") {
        CHECK(frame_diff_loss(target, target) == 0.0);
    }

    SUBCASE("a constant per-sequence bias cancels") {
        std::vector<Image> pred = target;
        for (Image& f : pred)
            for (int c = 0; c < 3; ++c) f.channel(c) += 0.37;
        CHECK(frame_diff_loss(pred, target) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("single shifted frame contributes through two pairs") {
        std::vector<Image> pred = target;
        for (int c = 0; c < 3; ++c) pred[1].channel(c) += 0.1;
        // Pairs (0,1) and (1,2) each see a 0.1 residual; (2,3) none.
        CHECK(frame_diff_loss(pred, target) == doctest::Approx(0.2 / 3.0).epsilon(1e-9));
    }

    SUBCASE("length checks") {
        std::vector<Image> one = {target[0]};
        CHECK_THROWS_AS(frame_diff_loss(one, one), PreconditionError);
    }
}

TEST_CASE("total_harmonizer_loss") {
    LossWeights w; // alpha = 0.5, beta = 0.025

    SUBCASE("unit components combine to 2.525") {
        CHECK(combine_harmonizer_components(1.0, 1.0, 1.0, 1.0, w) ==
              doctest::Approx(2.525).epsilon(1e-12));
    }

    SUBCASE("all zero components give zero") {
        CHECK(combine_harmonizer_components(0, 0, 0, 0, w) == 0.0);
    }

    SUBCASE("gan term ignored when beta is zero") {
        LossWeights wb = w;
        wb.beta = 0.0;
        CHECK(combine_harmonizer_components(0.1, 0.2, 0.3, 99.0, wb) ==
              doctest::Approx(0.1 + 0.2 + 0.5 * 0.3).epsilon(1e-12));
    }

    SUBCASE("sequence evaluation") {
        Rng rng(10);
        std::vector<Image> target, pred;
        for (int i = 0; i < 3; ++i) {
            target.push_back(random_image(8, 8, rng));
            pred.push_back(target.back());
        }
        PyramidPerceptual backend;
        const HarmonizerBreakdown h = total_harmonizer_loss(pred, target, 0.0, w, &backend);
        CHECK(h.total == doctest::Approx(0.0).epsilon(1e-12));
    }
}

TEST_CASE("psnr") {
    Rng rng(11);
    const Image a = random_image(8, 8, rng);
    CHECK(std::isinf(psnr(a, a)));

    // Constant squared error of 0.01 -> 20 dB.
    Image b = a;
    for (int c = 0; c < 3; ++c) b.channel(c) += 0.1;
    CHECK(psnr(a, b) == doctest::Approx(20.0).epsilon(1e-9));

    // MSE 1 -> 0 dB.
    const Image zero = constant_image(8, 8, 0.0);
    const Image one = constant_image(8, 8, 1.0);
    CHECK(psnr(zero, one) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("image_loss gradients match finite differences") {
    const Index h = 16, w = 16;
    Rng rng(12);
    PyramidPerceptual backend;

    // Pred and target separated everywhere so the L1 sign term is smooth at
    // the probe scale.
    Image pred = random_image(h, w, rng, 0.3, 0.45);
    Image target = random_image(h, w, rng, 0.55, 0.7);
    GrayImage alpha(h, w), mask(h, w);
    for (Index i = 0; i < alpha.size(); ++i) {
        alpha.data()[i] = rng.uniform(0.2, 0.6);
        mask.data()[i] = rng.uniform() > 0.5 ? 1.0 : 0.0;
    }
    RegionSet regions;
    regions.boxes.push_back({2, 3, 9, 11});
    regions.boxes.push_back({7, 1, 12, 6});

    struct Config {
        bool use_mask, use_regions, literal, squared;
    };
    const Config configs[] = {
        {true, false, false, false},
        {true, true, false, false},
        {false, true, false, false},
        {true, true, true, true},
    };

    for (const Config& cfg : configs) {
        CAPTURE(cfg.use_mask);
        CAPTURE(cfg.use_regions);
        LossWeights lw;
        lw.omega = 3.0;
        lw.ssim_literal = cfg.literal;
        lw.mask_squared = cfg.squared;

        const auto value = [&](const Image& p, const GrayImage& a) {
            return image_loss(p, a, target, cfg.use_mask ? &mask : nullptr, lw, &backend,
                              cfg.use_regions ? &regions : nullptr, nullptr)
                .total;
        };

        LossGrads grads;
        image_loss(pred, alpha, target, cfg.use_mask ? &mask : nullptr, lw, &backend,
                   cfg.use_regions ? &regions : nullptr, &grads);

        const double step = 1e-5;
        for (int probe = 0; probe < 40; ++probe) {
            const Index y = rng.uniform_int(h), x = rng.uniform_int(w);
            const int c = static_cast<int>(rng.uniform_int(3));
            Image pp = pred, pm = pred;
            pp.channel(c)(y, x) += step;
            pm.channel(c)(y, x) -= step;
            const double fd = (value(pp, alpha) - value(pm, alpha)) / (2 * step);
            CHECK(relative_error(grads.d_color.channel(c)(y, x), fd, 1e-6) < 1e-4);
        }
        for (int probe = 0; probe < 20; ++probe) {
            const Index y = rng.uniform_int(h), x = rng.uniform_int(w);
            GrayImage ap = alpha, am = alpha;
            ap(y, x) += step;
            am(y, x) -= step;
            const double fd = (value(pred, ap) - value(pred, am)) / (2 * step);
            CHECK(relative_error(grads.d_alpha(y, x), fd, 1e-6) < 1e-4);
        }
    }
}

TEST_CASE("image_loss equals its parts") {
    // The differentiable entry point must agree with the standalone ops.
    Rng rng(13);
    const Image pred = random_image(20, 20, rng);
    const Image target = random_image(20, 20, rng);
    GrayImage alpha(20, 20), mask(20, 20);
    for (Index i = 0; i < alpha.size(); ++i) {
        alpha.data()[i] = rng.uniform();
        mask.data()[i] = rng.uniform() > 0.5 ? 1.0 : 0.0;
    }
    PyramidPerceptual backend;
    LossWeights w;
    RegionSet regions;
    regions.boxes.push_back({4, 4, 10, 12});

    const ImageLossResult r = image_loss(pred, alpha, target, &mask, w, &backend, &regions, nullptr);
    const ReconBreakdown parts = recon_loss(pred, target, &mask, alpha, w, &backend);
    CHECK(r.breakdown.total == doctest::Approx(parts.total).epsilon(1e-12));

    const PixelLossMaps maps = make_pixel_loss_maps(pred, target, &mask, alpha, w, &backend);
    CHECK(r.total ==
          doctest::Approx(region_weighted_loss(parts.total, maps, regions, w)).epsilon(1e-12));
}
