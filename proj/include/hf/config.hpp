#pragma once

#include <string>

#include "hf/dataset.hpp"
#include "hf/encode.hpp"
#include "hf/hypernet.hpp"

namespace hf {

// Resolved run configuration. Files may set any subset of keys; everything
// else keeps the defaults below. Unknown keys are rejected so typos cannot
// silently fall back to defaults. The canonical JSON dump (sorted keys) is
// what gets hashed into checkpoints and echoed into output directories.
struct Config {
    uint64_t seed = 1234;

    struct Dataset {
        std::vector<std::string> shapes = all_shape_names();
        std::vector<std::string> attributes = all_attribute_names();
        int holdout = 27;  // round-robin count; ignored when holdout_prompts set
        std::vector<std::string> holdout_prompts;
        int poses_per_scene = 20;
    } dataset;

    struct Encoding {
        SinusoidalConfig sinusoidal;
        HashGridConfig hash;
        bool use_sinusoidal = true;
        bool use_hash = true;
        double scene_radius = 2.0;
    } encoding;

    struct Nerf {
        int layers = 6;
        int hidden_dim = 64;
        int skip_period = 2;
    } nerf;

    struct Hyper {
        int token_dim = 64;
        int blocks = 6;
        int heads = 12;
        int head_dim = 16;
        int mlp_ratio = 4;
        int generator_hidden = 128;
    } hypernet;

    struct Oracle {
        double kappa = 50.0;
        double beta = 0.02;
    } oracle;

    RenderSettings render;
    int rays_per_image = 1024;

    struct Train {
        int steps = 3000;
        int prompts_per_step = 3;
        double learning_rate = 1e-4;
        double adam_beta1 = 0.9;
        double adam_beta2 = 0.999;
        double adam_epsilon = 1e-8;
        std::string mode = "dynamic";
        std::string teacher = "oracle";
        int teacher_steps = 2000;
        int eval_every = 500;
        int checkpoint_every = 1000;
        int epoch_steps = 100;
    } train;

    struct Eval {
        int poses = 3;
        std::vector<int> k_list = {1, 3, 5};
    } eval;

    static Config from_json_text(const std::string& text);
    static Config load(const std::string& path);
    std::string to_json_text() const;
    uint64_t hash() const { return fnv1a64(to_json_text()); }
    void validate() const;

    NerfArchitecture nerf_arch_no_input() const {
        NerfArchitecture a;
        a.num_layers = nerf.layers;
        a.hidden_dim = nerf.hidden_dim;
        a.skip_period = nerf.skip_period;
        return a;
    }
    HypernetConfig hypernet_config() const {
        HypernetConfig c;
        c.token_dim = hypernet.token_dim;
        c.tx.num_blocks = hypernet.blocks;
        c.tx.num_heads = hypernet.heads;
        c.tx.head_dim = hypernet.head_dim;
        c.tx.mlp_ratio = hypernet.mlp_ratio;
        c.gen_hidden = hypernet.generator_hidden;
        return c;
    }
};

// Vocabulary comes from the manifest grid so holdout words stay addressable.
Hypernet<float> build_model(const Config& cfg, const DatasetManifest& manifest);

// Dataset manifest straight from the config's dataset/render/oracle sections.
DatasetManifest manifest_from_config(const Config& cfg);

}  // namespace hf
