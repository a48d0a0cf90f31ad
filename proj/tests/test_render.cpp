#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "gradcheck.hpp"
#include "hf/render.hpp"

using hf::Tensor;
using F32 = Tensor<float>;
using F64 = Tensor<double>;

TEST_CASE("ray geometry") {
    hf::CameraPose cam;
    cam.position = {4, 0, 0};
    cam.look_at = {0, 0, 0};
    cam.width = cam.height = 65;  // odd, so a pixel center sits on the axis
    auto rays = hf::make_rays(cam);

    SUBCASE("center pixel ray points at look_at") {
        const auto d = rays.dirs[static_cast<size_t>(32) * 65 + 32];
        CHECK(d.x == doctest::Approx(-1.0).epsilon(1e-12));
        CHECK(std::fabs(d.y) < 1e-12);
        CHECK(std::fabs(d.z) < 1e-12);
    }

    SUBCASE("all directions are unit length") {
        for (const auto& d : rays.dirs) CHECK(std::fabs(hf::norm(d) - 1.0) < 1e-5);
    }

    SUBCASE("corner ray angle matches the pinhole closed form") {
        const double expect =
            std::atan(std::tan(cam.fov_y / 2) * std::sqrt(2.0) * (1.0 - 1.0 / cam.width));
        const auto d = rays.dirs[0];
        const double angle = std::acos(hf::dot(d, {-1, 0, 0}));
        CHECK(angle == doctest::Approx(expect).epsilon(1e-9));
    }

    SUBCASE("degenerate poses are rejected") {
        hf::CameraPose bad = cam;
        bad.up = {-1, 0, 0};  // parallel to the view direction
        CHECK_THROWS_AS(hf::make_rays(bad), hf::ConfigError);
        bad = cam;
        bad.look_at = bad.position;
        CHECK_THROWS_AS(hf::make_rays(bad), hf::ConfigError);
    }
}

namespace {

struct TestField {
    int rays = 8;
    int samples = 16;
    std::vector<double> deltas;
    F32 sigma;
    F32 rgb;

    static TestField random(int r, int s, hf::Pcg32& rng, double sigma_scale = 3.0) {
        TestField f;
        f.rays = r;
        f.samples = s;
        auto ts = hf::sample_depths(r, s, 2.0, 6.0, true, &rng);
        f.deltas = hf::segment_deltas(ts, r, s, 6.0);
        f.sigma = F32::uniform({r * s}, 0.f, static_cast<float>(sigma_scale), rng);
        f.rgb = F32::uniform({r * s, 3}, 0.f, 1.f, rng);
        return f;
    }
};

}  // namespace

TEST_CASE("zero density composites to the background exactly") {
    hf::Pcg32 rng(1);
    auto f = TestField::random(4, 8, rng);
    auto zero_sigma = F32::zeros({4 * 8});
    auto res = hf::composite(zero_sigma, f.rgb, f.deltas, 4, 8, {0.9f, 0.5f, 0.1f});
    for (int r = 0; r < 4; ++r) {
        CHECK(res.pixels.at(r, 0) == 0.9f);
        CHECK(res.pixels.at(r, 1) == 0.5f);
        CHECK(res.pixels.at(r, 2) == 0.1f);
        CHECK(res.opacity.at(r) == 0.0f);
    }
}

TEST_CASE("a single opaque sample saturates to its color") {
    std::vector<double> deltas = {0.5, 0.5};
    auto sigma = F32::from({1e5f, 0.f}, {2});
    auto rgb = F32::from({0.2f, 0.6f, 0.8f, 0.f, 0.f, 0.f}, {2, 3});
    auto res = hf::composite(sigma, rgb, deltas, 1, 2, {1.f, 1.f, 1.f});
    CHECK(res.pixels.at(0, 0) == doctest::Approx(0.2).epsilon(1e-6));
    CHECK(res.pixels.at(0, 1) == doctest::Approx(0.6).epsilon(1e-6));
    CHECK(res.pixels.at(0, 2) == doctest::Approx(0.8).epsilon(1e-6));
    CHECK(res.opacity.at(0) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("uniform slab opacity matches the closed form at S=128") {
    const int S = 128;
    const double t_near = 0.0, t_far = 4.0;
    const double slab_lo = 1.0, slab_hi = 3.0, sig = 1.3;
    auto ts = hf::sample_depths(1, S, t_near, t_far, false, nullptr);
    auto deltas = hf::segment_deltas(ts, 1, S, t_far);
    F32 sigma({S});
    for (int j = 0; j < S; ++j)
        sigma.at(j) = (ts[static_cast<size_t>(j)] >= slab_lo && ts[static_cast<size_t>(j)] < slab_hi)
                          ? static_cast<float>(sig)
                          : 0.f;
    auto rgb = F32::full({S, 3}, 1.f);
    auto res = hf::composite(sigma, rgb, deltas, 1, S, {0.f, 0.f, 0.f});
    const double expect = 1.0 - std::exp(-sig * (slab_hi - slab_lo));
    CHECK(std::fabs(res.opacity.at(0) - expect) / expect < 0.02);
}

TEST_CASE("conservation: weights plus residual transmittance sum to one") {
    hf::Pcg32 rng(2);
    // with unit colors and unit background, the pixel IS the conservation sum
    for (int trial = 0; trial < 64; ++trial) {
        auto f = TestField::random(16, 24, rng, 8.0);
        auto ones = F32::full({16 * 24, 3}, 1.f);
        auto res = hf::composite(f.sigma, ones, f.deltas, 16, 24, {1.f, 1.f, 1.f});
        for (int r = 0; r < 16; ++r)
            for (int c = 0; c < 3; ++c) CHECK(std::fabs(res.pixels.at(r, c) - 1.0f) < 1e-5);
    }
}

TEST_CASE("monotonicity: raising any sigma never lowers opacity") {
    hf::Pcg32 rng(3);
    auto f = TestField::random(1, 12, rng);
    auto base = hf::composite(f.sigma, f.rgb, f.deltas, 1, 12, {1.f, 1.f, 1.f});
    for (int j = 0; j < 12; ++j) {
        auto bumped = f.sigma.clone_detached();
        bumped.at(j) += 0.7f;
        auto res = hf::composite(bumped, f.rgb, f.deltas, 1, 12, {1.f, 1.f, 1.f});
        CHECK(res.opacity.at(0) >= base.opacity.at(0) - 1e-7f);
    }
}

TEST_CASE("stratified sampling is deterministic given the seed") {
    hf::Pcg32 a(99), b(99);
    auto t1 = hf::sample_depths(8, 16, 2, 6, true, &a);
    auto t2 = hf::sample_depths(8, 16, 2, 6, true, &b);
    CHECK(t1 == t2);
    for (int r = 0; r < 8; ++r)
        for (int j = 0; j < 16; ++j) {
            const double t = t1[static_cast<size_t>(r) * 16 + j];
            CHECK(t >= 2.0 + j * 0.25);
            CHECK(t < 2.0 + (j + 1) * 0.25);
        }
}

TEST_CASE("composite gradients vs finite differences") {
    hf::Pcg32 rng(4);
    const int r = 3, s = 6;
    auto ts = hf::sample_depths(r, s, 2.0, 6.0, true, &rng);
    auto deltas = hf::segment_deltas(ts, r, s, 6.0);
    auto sigma = F64::uniform({r * s}, 0.05, 2.0, rng);
    auto rgb = F64::uniform({r * s, 3}, 0.1, 0.9, rng);
    auto target = F64::uniform({r, 3}, 0.0, 1.0, rng);
    auto rep = hftest::gradcheck({sigma, rgb}, [&]() {
        auto res = hf::composite(sigma, rgb, deltas, r, s, {1.0, 1.0, 1.0});
        auto loss = hf::mse(res.pixels, target);
        return hf::add(loss, hf::reduce_mean_all(res.opacity));
    });
    CHECK(rep.max_rel_err < 1e-4);
}

TEST_CASE("psnr") {
    hf::Image a(4, 4);
    for (auto& v : a.pixels) v = 0.25f;
    CHECK(hf::psnr_images(a, a) == 99.0);
    hf::Image b = a;
    b.pixels[0] += 0.5f;
    const double p1 = hf::psnr_images(a, b);
    b.pixels[1] += 0.5f;
    const double p2 = hf::psnr_images(a, b);
    CHECK(p1 > p2);  // monotone decreasing in MSE
    CHECK(p1 == doctest::Approx(10.0 * std::log10(48.0 / 0.25)).epsilon(1e-9));
}
