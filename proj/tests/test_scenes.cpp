#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hf/dataset.hpp"
#include "hf/scenes.hpp"

using hf::SceneSpec;

TEST_CASE("oracle density profile of the sphere") {
    hf::OracleField f{SceneSpec{hf::ShapeKind::Sphere, hf::AttributeKind::Red}};

    // center: sigmoid(0.6/0.02) ~ 1
    CHECK(f.density({0, 0, 0}) == doctest::Approx(f.kappa).epsilon(1e-6));
    // on the surface ||x|| = 0.6: exactly kappa/2
    CHECK(f.density({0.6, 0, 0}) == doctest::Approx(f.kappa / 2).epsilon(1e-12));
    // far outside
    CHECK(f.density({2, 0, 0}) < 1e-6 * f.kappa);
}

TEST_CASE("all SDFs are 1-Lipschitz on random pairs") {
    hf::Pcg32 rng(21);
    for (int s = 0; s < hf::kNumShapes; ++s) {
        const auto shape = static_cast<hf::ShapeKind>(s);
        for (int trial = 0; trial < 500; ++trial) {
            hf::Vec3 a{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
            hf::Vec3 b{rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2), rng.uniform(-1.2, 1.2)};
            const double lhs = std::fabs(hf::shape_sdf(shape, a) - hf::shape_sdf(shape, b));
            const double rhs = hf::norm(a - b);
            INFO("shape ", hf::shape_name(shape));
            CHECK(lhs <= rhs + 1e-9);
        }
    }
}

TEST_CASE("SDFs are negative inside and positive outside the unit ball") {
    for (int s = 0; s < hf::kNumShapes; ++s) {
        const auto shape = static_cast<hf::ShapeKind>(s);
        INFO("shape ", hf::shape_name(shape));
        // interior probe: torus material sits on its major ring, cone and
        // pyramid bulk sits below the axis midpoint
        hf::Vec3 inside{0, 0, 0.05};
        if (shape == hf::ShapeKind::Torus) inside = {0.42, 0, 0};
        if (shape == hf::ShapeKind::Cone || shape == hf::ShapeKind::Pyramid) inside = {0, 0, -0.15};
        CHECK(hf::shape_sdf(shape, inside) < 0.0);
        CHECK(hf::shape_sdf(shape, {1.5, 1.5, 1.5}) > 0.0);
        CHECK(hf::shape_sdf(shape, {0, 0, 1.2}) > 0.0);
    }
}

TEST_CASE("prompt strings round-trip through parsing") {
    for (const auto& sn : hf::all_shape_names())
        for (const auto& an : hf::all_attribute_names()) {
            SceneSpec spec{*hf::parse_shape(sn), *hf::parse_attribute(an)};
            CHECK(hf::parse_prompt(spec.prompt()) == spec);
        }
    CHECK_THROWS_AS(hf::parse_prompt("glacier sphere"), hf::VocabError);
    CHECK_THROWS_AS(hf::parse_prompt("redsphere"), hf::VocabError);
    try {
        hf::parse_prompt("glacier sphere");
    } catch (const hf::VocabError& e) {
        CHECK(std::string(e.what()).find("red") != std::string::npos);  // lists known words
    }
}

TEST_CASE("red sphere front view has a red center pixel") {
    hf::OracleField f{SceneSpec{hf::ShapeKind::Sphere, hf::AttributeKind::Red}};
    hf::CameraPose cam;
    cam.position = {4, 0, 0};
    cam.width = cam.height = 64;
    auto img = hf::oracle_render(f, cam, 64, 2.0, 6.0, {1, 1, 1});
    const float* c = img.px(32, 32);
    CHECK(std::fabs(c[0] - 1.0f) < 0.02f);
    CHECK(std::fabs(c[1]) < 0.02f);
    CHECK(std::fabs(c[2]) < 0.02f);
}

TEST_CASE("kappa=0 renders pure background") {
    hf::OracleField f{SceneSpec{hf::ShapeKind::Box, hf::AttributeKind::Green}};
    f.kappa = 0.0;
    hf::CameraPose cam;
    cam.width = cam.height = 16;
    auto img = hf::oracle_render(f, cam, 32, 2.0, 6.0, {1, 1, 1});
    for (float v : img.pixels) CHECK(v == 1.0f);
}

TEST_CASE("sphere renders are rotation invariant across azimuth") {
    hf::OracleField f{SceneSpec{hf::ShapeKind::Sphere, hf::AttributeKind::Blue}};
    hf::CameraPose cam1, cam2;
    cam1.position = {4, 0, 0};
    cam2.position = {0, 4, 0};
    cam1.width = cam1.height = cam2.width = cam2.height = 32;
    auto img1 = hf::oracle_render(f, cam1, 64, 2.0, 6.0, {1, 1, 1});
    auto img2 = hf::oracle_render(f, cam2, 64, 2.0, 6.0, {1, 1, 1});
    for (size_t i = 0; i < img1.pixels.size(); ++i)
        CHECK(std::fabs(img1.pixels[i] - img2.pixels[i]) < 1e-4f);
}

TEST_CASE("manifest construction and determinism") {
    auto grid = hf::make_grid(hf::all_shape_names(), hf::all_attribute_names());
    CHECK(grid.size() == 72);
    auto holdout = hf::round_robin_holdout(hf::all_shape_names(), hf::all_attribute_names(), 27);
    CHECK(holdout.size() == 27);

    hf::RenderSettings rs;
    auto m = hf::build_manifest(grid, holdout, 10, 77, rs, 50.0, 0.02);
    CHECK(m.train_indices().size() == 45);
    CHECK(m.holdout_indices().size() == 27);
    CHECK(m.poses.size() == 10);
    for (const auto& p : m.poses) {
        CHECK(p.elevation >= -1.0471975511965976);
        CHECK(p.elevation <= 1.0471975511965976);
    }

    // byte-identical reproduction from the same inputs
    auto m2 = hf::build_manifest(grid, holdout, 10, 77, rs, 50.0, 0.02);
    CHECK(m.to_json() == m2.to_json());

    // round-trips through json
    auto m3 = hf::DatasetManifest::from_json(m.to_json());
    CHECK(m3.to_json() == m.to_json());

    // empty holdout: everything trains
    auto m4 = hf::build_manifest(grid, {}, 4, 5, rs, 50.0, 0.02);
    CHECK(m4.train_indices().size() == 72);
    CHECK(m4.holdout_indices().empty());

    // holdout must be a subset of the grid
    std::vector<SceneSpec> rogue = {SceneSpec{hf::ShapeKind::Sphere, hf::AttributeKind::Red}};
    auto small_grid = hf::make_grid({"box"}, {"green", "blue"});
    CHECK_THROWS_AS(hf::build_manifest(small_grid, rogue, 3, 1, rs, 50, 0.02), hf::ConfigError);
}

TEST_CASE("round-robin holdout keeps every word individually seen") {
    std::vector<std::string> shapes = {"sphere", "box", "torus", "cylinder"};
    std::vector<std::string> attrs = {"red", "green", "blue", "yellow"};
    auto holdout = hf::round_robin_holdout(shapes, attrs, 4);
    CHECK(holdout.size() == 4);
    // each shape loses exactly one color and every color is held out once
    std::vector<int> shape_count(4, 0), attr_count(4, 0);
    for (const auto& h : holdout) {
        for (int i = 0; i < 4; ++i) {
            if (hf::shape_name(h.shape) == shapes[static_cast<size_t>(i)]) shape_count[static_cast<size_t>(i)]++;
            if (hf::attribute_name(h.attribute) == attrs[static_cast<size_t>(i)]) attr_count[static_cast<size_t>(i)]++;
        }
    }
    for (int i = 0; i < 4; ++i) {
        CHECK(shape_count[static_cast<size_t>(i)] == 1);
        CHECK(attr_count[static_cast<size_t>(i)] == 1);
    }
}
