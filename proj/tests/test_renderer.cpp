#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "hsr/render/renderer.hpp"
#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace hsr;
using namespace hsr::testing;

namespace {

double max_channel_diff(const RenderOutput& a, const RenderOutput& b) {
    double m = (a.alpha - b.alpha).abs().maxCoeff();
    for (int c = 0; c < 3; ++c)
        m = std::max(m, (a.color.channel(c) - b.color.channel(c)).abs().maxCoeff());
    return m;
}

constexpr double kShC0 = 0.28209479177387814;

} // namespace

TEST_CASE("project_gaussian") {
    const Camera cam = axis_camera(64, 64, 60.0);
    Gaussian g;
    g.sh = VecX::Zero(3);

    SUBCASE("optical axis lands on the principal point") {
        g.position = Vec3(0, 0, 1);
        const ProjectedGaussian p = project_gaussian(g, cam);
        CHECK(!p.culled);
        CHECK(p.mean2d.x() == doctest::Approx(cam.cx));
        CHECK(p.mean2d.y() == doctest::Approx(cam.cy));
        CHECK(p.depth == doctest::Approx(1.0));
    }

    SUBCASE("isotropic covariance scales with focal over depth") {
        const double sigma = 0.05, z = 2.0;
        g.position = Vec3(0, 0, z);
        g.log_scale = Vec3::Constant(std::log(sigma));
        RenderOptions opts;
        const ProjectedGaussian p = project_gaussian(g, cam, opts);
        const double expect = std::pow(cam.fx * sigma / z, 2) + opts.cov2d_dilation;
        CHECK(p.cov2d(0, 0) == doctest::Approx(expect).epsilon(1e-9));
        CHECK(p.cov2d(1, 1) == doctest::Approx(expect).epsilon(1e-9));
        CHECK(std::abs(p.cov2d(0, 1)) < 1e-12);
        // Eigenvalues strictly positive.
        CHECK(p.cov2d.determinant() > 0.0);
    }

    SUBCASE("points behind the camera are culled, not thrown") {
        g.position = Vec3(0, 0, -1);
        CHECK(project_gaussian(g, cam).culled);
        g.position = Vec3(0, 0, 0.005); // in front but inside the near plane
        CHECK(project_gaussian(g, cam).culled);
    }
}

TEST_CASE("depth_sort") {
    CHECK(depth_sort({3, 1, 2}) == std::vector<int>{1, 2, 0});
    CHECK(depth_sort({1, 1, 1}) == std::vector<int>{0, 1, 2}); // tie -> index order
    Rng rng(5);
    std::vector<double> d(100);
    for (double& v : d) v = rng.uniform(0, 10);
    const auto order = depth_sort(d);
    std::vector<int> sorted_copy = order;
    std::sort(sorted_copy.begin(), sorted_copy.end());
    for (int i = 0; i < 100; ++i) CHECK(sorted_copy[i] == i); // permutation
    for (int i = 1; i < 100; ++i) CHECK(d[order[i - 1]] <= d[order[i]]);
}

TEST_CASE("render basics") {
    const Camera cam = axis_camera(32, 32, 30.0);

    SUBCASE("empty cloud gives pure background") {
        GaussianCloud empty(0, 0, SpaceTag::world);
        const RenderOutput out = render(empty, cam, Vec3(0.2, 0.4, 0.6));
        CHECK((out.color.r - 0.2).abs().maxCoeff() == 0.0);
        CHECK((out.color.g - 0.4).abs().maxCoeff() == 0.0);
        CHECK((out.color.b - 0.6).abs().maxCoeff() == 0.0);
        CHECK(out.alpha.abs().maxCoeff() == 0.0);
    }

    SUBCASE("zero-sized image is an error") {
        GaussianCloud empty(0, 0, SpaceTag::world);
        Camera bad = cam;
        bad.width = 0;
        CHECK_THROWS_AS(render(empty, bad, Vec3::Zero()), PreconditionError);
    }

    SUBCASE("fully opaque splat owns its pixel") {
        GaussianCloud cloud(1, 0, SpaceTag::world);
        place_at_pixel(cloud, 0, cam, 16.5, 16.5, 1.0);
        cloud.log_scales.row(0).setConstant(std::log(0.05));
        cloud.opacity_logits[0] = 60.0; // sigmoid == 1 in double precision
        cloud.sh(0, 0) = 0.5 / kShC0;   // red channel at exactly 1
        RenderOptions opts;
        opts.alpha_clamp = 1.0;
        const RenderOutput out = render(cloud, cam, Vec3::Zero(), opts);
        CHECK(out.color.r(16, 16) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(out.alpha(16, 16) == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("two-splat compositing arithmetic") {
        GaussianCloud cloud(2, 0, SpaceTag::world);
        // Front: alpha 0.5, white. Back: alpha 0.5, black.
        place_at_pixel(cloud, 0, cam, 16.5, 16.5, 1.0);
        place_at_pixel(cloud, 1, cam, 16.5, 16.5, 2.0);
        cloud.log_scales.setConstant(std::log(0.05));
        cloud.opacity_logits.setZero(); // sigmoid(0) = 0.5
        cloud.sh(0, 0) = 0.5 / kShC0;
        cloud.sh(0, 1) = 0.5 / kShC0;
        cloud.sh(0, 2) = 0.5 / kShC0;
        cloud.sh.row(1).setConstant(-0.5 / kShC0); // black
        const RenderOutput out = render(cloud, cam, Vec3::Zero());
        // 0.5*1 + 0.5*0.5*0 = 0.5; alpha = 1 - 0.25.
        CHECK(out.color.r(16, 16) == doctest::Approx(0.5).epsilon(1e-9));
        CHECK(out.alpha(16, 16) == doctest::Approx(0.75).epsilon(1e-9));
    }
}

TEST_CASE("render invariants on random scenes") {
    Rng rng(77);
    const Camera cam = axis_camera(48, 48, 44.0);
    GaussianCloud cloud = random_front_cloud(40, 0, rng, 48, 48, 44.0);
    const Vec3 bg(0.1, 0.2, 0.3);
    RenderCache cache;
    const RenderOutput out = render(cloud, cam, bg, {}, &cache);

    SUBCASE("alpha plus transmittance is one") {
        CHECK(((1.0 - out.alpha) - cache.transmittance).abs().maxCoeff() < 1e-9);
        CHECK(out.alpha.minCoeff() >= 0.0);
        CHECK(out.alpha.maxCoeff() <= 1.0);
    }

    SUBCASE("colors stay in range") {
        for (int c = 0; c < 3; ++c) {
            CHECK(out.color.channel(c).minCoeff() >= 0.0);
            CHECK(out.color.channel(c).maxCoeff() <= 1.0);
        }
    }

    SUBCASE("adding a splat never decreases alpha") {
        GaussianCloud bigger = cloud;
        GaussianCloud extra(1, 0, SpaceTag::world);
        place_at_pixel(extra, 0, cam, 24.0, 24.0, 1.5);
        extra.log_scales.row(0).setConstant(std::log(0.1));
        extra.opacity_logits[0] = 1.0;
        bigger.append(extra);
        const RenderOutput out2 = render(bigger, cam, bg);
        CHECK(((out2.alpha - out.alpha) >= -1e-12).all());
    }

    SUBCASE("background linearity") {
        const RenderOutput black = render(cloud, cam, Vec3::Zero());
        for (int c = 0; c < 3; ++c) {
            const ArrXX expect = black.color.channel(c) + bg[c] * (1.0 - black.alpha);
            CHECK((out.color.channel(c) - expect).abs().maxCoeff() < 1e-6);
        }
    }

    SUBCASE("deterministic across thread counts") {
        RenderOptions two;
        two.num_threads = 2;
        RenderOptions four;
        four.num_threads = 4;
        const RenderOutput a = render(cloud, cam, bg, two);
        const RenderOutput b = render(cloud, cam, bg, four);
        CHECK(max_channel_diff(a, out) == 0.0);
        CHECK(max_channel_diff(a, b) == 0.0);
    }
}

TEST_CASE("tiled renderer matches the naive oracle") {
    Rng rng(123);
    RenderOptions opts;
    opts.early_stop_transmittance = 0.0; // oracle-comparison mode
    for (int scene = 0; scene < 6; ++scene) {
        const int n = 10 + static_cast<int>(rng.uniform_int(60));
        const Camera cam = axis_camera(40, 40, 36.0);
        const GaussianCloud cloud = random_front_cloud(n, scene % 2, rng, 40, 40, 36.0);
        const Vec3 bg(rng.uniform(), rng.uniform(), rng.uniform());
        const RenderOutput tiled = render(cloud, cam, bg, opts);
        const RenderOutput naive = render_naive(cloud, cam, bg, opts);
        CHECK(max_channel_diff(tiled, naive) < 1e-5);
    }
}

TEST_CASE("single splat bit-identical with tiling disabled") {
    Rng rng(321);
    const Camera cam = axis_camera(24, 24, 22.0);
    const GaussianCloud cloud = random_front_cloud(1, 0, rng, 24, 24, 22.0);
    RenderOptions opts;
    opts.early_stop_transmittance = 0.0;
    opts.tile_size = 64; // one tile covers the whole image
    const RenderOutput tiled = render(cloud, cam, Vec3(0.5, 0.5, 0.5), opts);
    const RenderOutput naive = render_naive(cloud, cam, Vec3(0.5, 0.5, 0.5), opts);
    CHECK(max_channel_diff(tiled, naive) == 0.0);
}

TEST_CASE("early termination changes little and only with low transmittance") {
    Rng rng(444);
    const Camera cam = axis_camera(32, 32, 30.0);
    GaussianCloud cloud = random_front_cloud(120, 0, rng, 32, 32, 30.0);
    cloud.opacity_logits.setConstant(2.0); // dense occlusion
    RenderOptions with_stop;
    RenderOptions no_stop;
    no_stop.early_stop_transmittance = 0.0;
    const RenderOutput a = render(cloud, cam, Vec3::Zero(), with_stop);
    const RenderOutput b = render(cloud, cam, Vec3::Zero(), no_stop);
    CHECK(max_channel_diff(a, b) < 2e-4);
}

TEST_CASE("render_backward") {
    const int size = 16;
    const double focal = 15.0;
    const Camera cam = axis_camera(size, size, focal);

    SUBCASE("zero upstream gives zero gradients") {
        Rng rng(10);
        const GaussianCloud cloud = random_front_cloud(5, 0, rng, size, size, focal);
        RenderCache cache;
        render(cloud, cam, Vec3::Zero(), {}, &cache);
        const CloudGrads g = render_backward(cloud, cam, Image(size, size),
                                             GrayImage::Zero(size, size), cache);
        CHECK(g.d_positions.norm() == 0.0);
        CHECK(g.d_sh.norm() == 0.0);
        CHECK(g.d_opacity_logits.norm() == 0.0);
    }

    SUBCASE("stale cache is rejected") {
        Rng rng(11);
        GaussianCloud cloud = random_front_cloud(3, 0, rng, size, size, focal);
        RenderCache cache;
        render(cloud, cam, Vec3::Zero(), {}, &cache);
        cloud.positions(0, 0) += 0.01;
        CHECK_THROWS_AS(render_backward(cloud, cam, Image(size, size),
                                        GrayImage::Zero(size, size), cache),
                        PreconditionError);
    }

    SUBCASE("single splat opacity gradient by hand") {
        GaussianCloud cloud(1, 0, SpaceTag::world);
        place_at_pixel(cloud, 0, cam, 8.5, 8.5, 1.0);
        cloud.log_scales.row(0).setConstant(std::log(0.08));
        cloud.opacity_logits[0] = 0.4;
        cloud.sh(0, 0) = 0.3 / kShC0; // red 0.8, others 0.5
        RenderOptions opts;
        opts.cutoff_sigma = 0.0;
        RenderCache cache;
        render(cloud, cam, Vec3::Zero(), opts, &cache);

        // Loss = red value of pixel (8, 8): d pixel / d logit = c * G * o(1-o),
        // with G = 1 at the exact center.
        Image up(size, size);
        up.r(8, 8) = 1.0;
        const CloudGrads g =
            render_backward(cloud, cam, up, GrayImage::Zero(size, size), cache);
        const double o = sigmoid(0.4);
        const double expect = 0.8 * 1.0 * o * (1.0 - o);
        CHECK(g.d_opacity_logits[0] == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("finite-difference agreement, SH degrees 0 and 1") {
        for (int degree : {0, 1}) {
            Rng rng(900 + degree);
            const Index n = 6;
            GaussianCloud cloud = random_front_cloud(n, degree, rng, size, size, focal);
            RenderOptions opts;
            opts.cutoff_sigma = 0.0; // smooth configuration for difference tests
            opts.early_stop_transmittance = 0.0;

            // Random but fixed upstream gradients.
            Image up_c(size, size);
            GrayImage up_a(size, size);
            for (int y = 0; y < size; ++y)
                for (int x = 0; x < size; ++x) {
                    up_c.r(y, x) = rng.uniform(-1, 1);
                    up_c.g(y, x) = rng.uniform(-1, 1);
                    up_c.b(y, x) = rng.uniform(-1, 1);
                    up_a(y, x) = rng.uniform(-1, 1);
                }

            const auto loss = [&](const GaussianCloud& c) {
                const RenderOutput out = render(c, cam, Vec3(0.3, 0.3, 0.3), opts);
                double l = (out.alpha * up_a).sum();
                for (int ch = 0; ch < 3; ++ch)
                    l += (out.color.channel(ch) * up_c.channel(ch)).sum();
                return l;
            };

            RenderCache cache;
            render(cloud, cam, Vec3(0.3, 0.3, 0.3), opts, &cache);
            const CloudGrads g = render_backward(cloud, cam, up_c, up_a, cache);

            const double h = 1e-4;
            int bad = 0, total = 0;
            const auto check_param = [&](double* ptr, double analytic) {
                const double keep = *ptr;
                *ptr = keep + h;
                const double lp = loss(cloud);
                *ptr = keep - h;
                const double lm = loss(cloud);
                *ptr = keep;
                const double fd = (lp - lm) / (2 * h);
                ++total;
                if (relative_error(analytic, fd, 1e-4) >= 1e-3) ++bad;
            };

            for (Index i = 0; i < n; ++i) {
                for (int a = 0; a < 3; ++a)
                    check_param(&cloud.positions(i, a), g.d_positions(i, a));
                for (int a = 0; a < 4; ++a)
                    check_param(&cloud.rotations(i, a), g.d_rotations(i, a));
                for (int a = 0; a < 3; ++a)
                    check_param(&cloud.log_scales(i, a), g.d_log_scales(i, a));
                check_param(&cloud.opacity_logits[i], g.d_opacity_logits[i]);
                for (int a = 0; a < cloud.sh_dim(); ++a)
                    check_param(&cloud.sh(i, a), g.d_sh(i, a));
            }
            CHECK(total > 60);
            CHECK(bad == 0);
        }
    }
}
