#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hf/distill.hpp"

namespace fs = std::filesystem;
using hf::Tensor;
using F32 = Tensor<float>;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("hf_ckpt_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

std::vector<char> slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::vector<char>((std::istreambuf_iterator<char>(f)),
                             std::istreambuf_iterator<char>());
}

hf::NamedParams<float> sample_params(uint64_t seed) {
    hf::Pcg32 rng(seed);
    hf::NamedParams<float> params;
    params.push_back({"a/w", F32::uniform({3, 4}, -1, 1, rng)});
    params.push_back({"a/b", F32::uniform({4}, -1, 1, rng)});
    params.push_back({"b/table", F32::uniform({8, 2}, -1, 1, rng)});
    return params;
}

hf::Config tiny_cfg() {
    hf::Config cfg;
    cfg.dataset.shapes = {"sphere", "box"};
    cfg.dataset.attributes = {"red", "green"};
    cfg.dataset.holdout = 0;
    cfg.dataset.poses_per_scene = 3;
    cfg.render.width = cfg.render.height = 12;
    cfg.render.samples_train = 6;
    cfg.render.samples_eval = 8;
    cfg.rays_per_image = 36;
    cfg.encoding.hash.log2_table_size = 8;
    cfg.encoding.hash.levels = 3;
    cfg.hypernet.blocks = 1;
    cfg.hypernet.heads = 2;
    cfg.hypernet.head_dim = 8;
    cfg.hypernet.generator_hidden = 16;
    cfg.nerf.hidden_dim = 8;
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    return cfg;
}

}  // namespace

TEST_CASE("save -> load -> save is byte-identical") {
    TempDir dir;
    auto params = sample_params(5);
    hf::Adam<float> opt;
    opt.reset(params);
    // some nonzero moments
    for (auto& m : opt.m)
        for (auto& v : m) v = 0.25f;
    opt.step_count = 7;
    hf::CheckpointState st{42, 123456789ULL, 987ULL, 0.5f, 7};

    hf::save_checkpoint(dir.file("a.ckpt"), params, &opt, st, 0xabcdef);

    auto params2 = sample_params(999);  // different values, same shapes
    hf::Adam<float> opt2;
    auto st2 = hf::load_checkpoint(dir.file("a.ckpt"), params2, &opt2, 0xabcdef);
    CHECK(st2.train_step == 42);
    CHECK(st2.rng_state == 123456789ULL);
    CHECK(st2.loss_ema == 0.5f);
    CHECK(opt2.step_count == 7);
    for (size_t i = 0; i < params.size(); ++i)
        CHECK(params2[i].tensor.vec() == params[i].tensor.vec());

    hf::save_checkpoint(dir.file("b.ckpt"), params2, &opt2, st2, 0xabcdef);
    CHECK(slurp(dir.file("a.ckpt")) == slurp(dir.file("b.ckpt")));
}

TEST_CASE("magic, version, hash, truncation, and name errors") {
    TempDir dir;
    auto params = sample_params(6);
    hf::save_checkpoint(dir.file("c.ckpt"), params, nullptr, {}, 111);

    SUBCASE("config hash mismatch rejected unless overridden") {
        auto p = sample_params(6);
        CHECK_THROWS_AS(hf::load_checkpoint(dir.file("c.ckpt"), p, nullptr, 222),
                        hf::CheckpointError);
        CHECK_NOTHROW(hf::load_checkpoint(dir.file("c.ckpt"), p, nullptr, 222,
                                          /*allow_config_mismatch=*/true));
    }

    SUBCASE("bad magic") {
        auto bytes = slurp(dir.file("c.ckpt"));
        bytes[0] = 'X';
        std::ofstream(dir.file("bad.ckpt"), std::ios::binary)
            .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        auto p = sample_params(6);
        CHECK_THROWS_AS(hf::load_checkpoint(dir.file("bad.ckpt"), p, nullptr, 111),
                        hf::CheckpointError);
    }

    SUBCASE("truncation names the offending record") {
        auto bytes = slurp(dir.file("c.ckpt"));
        bytes.pop_back();
        std::ofstream(dir.file("trunc.ckpt"), std::ios::binary)
            .write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        auto p = sample_params(6);
        try {
            hf::load_checkpoint(dir.file("trunc.ckpt"), p, nullptr, 111);
            FAIL("expected CheckpointError");
        } catch (const hf::CheckpointError& e) {
            CHECK(std::string(e.what()).find("b/table") != std::string::npos);
        }
    }

    SUBCASE("duplicate parameter names are rejected at save") {
        auto p = sample_params(6);
        p.push_back({"a/w", F32::zeros({2})});
        CHECK_THROWS_AS(hf::save_checkpoint(dir.file("dup.ckpt"), p, nullptr, {}, 1),
                        hf::CheckpointError);
    }

    SUBCASE("missing record rejected at load") {
        auto p = sample_params(6);
        p.push_back({"c/extra", F32::zeros({2})});
        CHECK_THROWS_AS(hf::load_checkpoint(dir.file("c.ckpt"), p, nullptr, 111),
                        hf::CheckpointError);
    }

    SUBCASE("shape mismatch rejected at load") {
        hf::NamedParams<float> p;
        p.push_back({"a/w", F32::zeros({5, 5})});
        p.push_back({"a/b", F32::zeros({4})});
        p.push_back({"b/table", F32::zeros({8, 2})});
        CHECK_THROWS_AS(hf::load_checkpoint(dir.file("c.ckpt"), p, nullptr, 111),
                        hf::CheckpointError);
    }
}

TEST_CASE("resume at step k matches the straight-through run bit for bit") {
    const int saved_threads = hf::num_threads();
    hf::set_num_threads(1);
    TempDir dir;
    auto cfg = tiny_cfg();
    cfg.train.steps = 6;
    auto manifest = hf::manifest_from_config(cfg);

    // straight-through
    hf::Distiller straight(cfg, manifest, hf::ConditioningMode::Dynamic);
    std::vector<float> losses_straight;
    for (int i = 0; i < 6; ++i) losses_straight.push_back(straight.step().loss);
    straight.save(dir.file("straight.ckpt"));

    // run 3, checkpoint, resume in a fresh instance, run 3 more
    hf::Distiller first(cfg, manifest, hf::ConditioningMode::Dynamic);
    std::vector<float> losses_split;
    for (int i = 0; i < 3; ++i) losses_split.push_back(first.step().loss);
    first.save(dir.file("mid.ckpt"));

    hf::Distiller second(cfg, manifest, hf::ConditioningMode::Dynamic);
    second.resume(dir.file("mid.ckpt"));
    CHECK(second.current_step() == 3);
    for (int i = 0; i < 3; ++i) losses_split.push_back(second.step().loss);
    second.save(dir.file("resumed.ckpt"));

    CHECK(losses_split == losses_straight);
    CHECK(slurp(dir.file("straight.ckpt")) == slurp(dir.file("resumed.ckpt")));
    hf::set_num_threads(saved_threads);
}
