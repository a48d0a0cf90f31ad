#include "hf/config.hpp"

#include <fstream>
#include <set>

#include <json.hpp>

using nlohmann::json;

namespace hf {

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) throw ConfigError("config section '" + where + "' must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            throw ConfigError("unknown config key '" + key + "' in '" + where + "'");
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

Config Config::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    Config c;
    reject_unknown(j, {"seed", "dataset", "encoding", "nerf", "hypernet", "oracle", "render",
                       "train", "eval"},
                   "<root>");
    get_if(j, "seed", c.seed);

    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        reject_unknown(d, {"shapes", "attributes", "holdout", "holdout_prompts", "poses_per_scene"},
                       "dataset");
        get_if(d, "shapes", c.dataset.shapes);
        get_if(d, "attributes", c.dataset.attributes);
        get_if(d, "holdout", c.dataset.holdout);
        get_if(d, "holdout_prompts", c.dataset.holdout_prompts);
        get_if(d, "poses_per_scene", c.dataset.poses_per_scene);
    }
    if (j.contains("encoding")) {
        const auto& e = j["encoding"];
        reject_unknown(e, {"sinusoidal", "hash", "use_sinusoidal", "use_hash", "scene_radius"},
                       "encoding");
        if (e.contains("sinusoidal")) {
            const auto& s = e["sinusoidal"];
            reject_unknown(s, {"frequencies", "include_input"}, "encoding.sinusoidal");
            get_if(s, "frequencies", c.encoding.sinusoidal.num_frequencies);
            get_if(s, "include_input", c.encoding.sinusoidal.include_input);
        }
        if (e.contains("hash")) {
            const auto& h = e["hash"];
            reject_unknown(h, {"levels", "features_per_level", "log2_table_size",
                               "base_resolution", "growth_factor"},
                           "encoding.hash");
            get_if(h, "levels", c.encoding.hash.levels);
            get_if(h, "features_per_level", c.encoding.hash.features_per_level);
            get_if(h, "log2_table_size", c.encoding.hash.log2_table_size);
            get_if(h, "base_resolution", c.encoding.hash.base_resolution);
            get_if(h, "growth_factor", c.encoding.hash.growth_factor);
        }
        get_if(e, "use_sinusoidal", c.encoding.use_sinusoidal);
        get_if(e, "use_hash", c.encoding.use_hash);
        get_if(e, "scene_radius", c.encoding.scene_radius);
    }
    if (j.contains("nerf")) {
        const auto& n = j["nerf"];
        reject_unknown(n, {"layers", "hidden_dim", "skip_period"}, "nerf");
        get_if(n, "layers", c.nerf.layers);
        get_if(n, "hidden_dim", c.nerf.hidden_dim);
        get_if(n, "skip_period", c.nerf.skip_period);
    }
    if (j.contains("hypernet")) {
        const auto& h = j["hypernet"];
        reject_unknown(h, {"token_dim", "blocks", "heads", "head_dim", "mlp_ratio",
                           "generator_hidden"},
                       "hypernet");
        get_if(h, "token_dim", c.hypernet.token_dim);
        get_if(h, "blocks", c.hypernet.blocks);
        get_if(h, "heads", c.hypernet.heads);
        get_if(h, "head_dim", c.hypernet.head_dim);
        get_if(h, "mlp_ratio", c.hypernet.mlp_ratio);
        get_if(h, "generator_hidden", c.hypernet.generator_hidden);
    }
    if (j.contains("oracle")) {
        const auto& o = j["oracle"];
        reject_unknown(o, {"kappa", "beta"}, "oracle");
        get_if(o, "kappa", c.oracle.kappa);
        get_if(o, "beta", c.oracle.beta);
    }
    if (j.contains("render")) {
        const auto& r = j["render"];
        reject_unknown(r, {"width", "height", "fov_y", "camera_radius", "t_near", "t_far",
                           "samples_train", "samples_eval", "background", "rays_per_image"},
                       "render");
        get_if(r, "width", c.render.width);
        get_if(r, "height", c.render.height);
        get_if(r, "fov_y", c.render.fov_y);
        get_if(r, "camera_radius", c.render.camera_radius);
        get_if(r, "t_near", c.render.t_near);
        get_if(r, "t_far", c.render.t_far);
        get_if(r, "samples_train", c.render.samples_train);
        get_if(r, "samples_eval", c.render.samples_eval);
        if (r.contains("background"))
            for (int i = 0; i < 3; ++i)
                c.render.background[static_cast<size_t>(i)] = r.at("background").at(i).get<float>();
        get_if(r, "rays_per_image", c.rays_per_image);
    }
    if (j.contains("train")) {
        const auto& t = j["train"];
        reject_unknown(t, {"steps", "prompts_per_step", "learning_rate", "adam_beta1",
                           "adam_beta2", "adam_epsilon", "mode", "teacher", "teacher_steps",
                           "eval_every", "checkpoint_every", "epoch_steps"},
                       "train");
        get_if(t, "steps", c.train.steps);
        get_if(t, "prompts_per_step", c.train.prompts_per_step);
        get_if(t, "learning_rate", c.train.learning_rate);
        get_if(t, "adam_beta1", c.train.adam_beta1);
        get_if(t, "adam_beta2", c.train.adam_beta2);
        get_if(t, "adam_epsilon", c.train.adam_epsilon);
        get_if(t, "mode", c.train.mode);
        get_if(t, "teacher", c.train.teacher);
        get_if(t, "teacher_steps", c.train.teacher_steps);
        get_if(t, "eval_every", c.train.eval_every);
        get_if(t, "checkpoint_every", c.train.checkpoint_every);
        get_if(t, "epoch_steps", c.train.epoch_steps);
    }
    if (j.contains("eval")) {
        const auto& e = j["eval"];
        reject_unknown(e, {"poses", "k_list"}, "eval");
        get_if(e, "poses", c.eval.poses);
        get_if(e, "k_list", c.eval.k_list);
    }
    c.validate();
    return c;
}

Config Config::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read config: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json_text(text);
}

std::string Config::to_json_text() const {
    json j;
    j["seed"] = seed;
    j["dataset"] = {{"shapes", dataset.shapes},
                    {"attributes", dataset.attributes},
                    {"holdout", dataset.holdout},
                    {"holdout_prompts", dataset.holdout_prompts},
                    {"poses_per_scene", dataset.poses_per_scene}};
    j["encoding"] = {
        {"sinusoidal",
         {{"frequencies", encoding.sinusoidal.num_frequencies},
          {"include_input", encoding.sinusoidal.include_input}}},
        {"hash",
         {{"levels", encoding.hash.levels},
          {"features_per_level", encoding.hash.features_per_level},
          {"log2_table_size", encoding.hash.log2_table_size},
          {"base_resolution", encoding.hash.base_resolution},
          {"growth_factor", encoding.hash.growth_factor}}},
        {"use_sinusoidal", encoding.use_sinusoidal},
        {"use_hash", encoding.use_hash},
        {"scene_radius", encoding.scene_radius}};
    j["nerf"] = {{"layers", nerf.layers},
                 {"hidden_dim", nerf.hidden_dim},
                 {"skip_period", nerf.skip_period}};
    j["hypernet"] = {{"token_dim", hypernet.token_dim}, {"blocks", hypernet.blocks},
                     {"heads", hypernet.heads},         {"head_dim", hypernet.head_dim},
                     {"mlp_ratio", hypernet.mlp_ratio}, {"generator_hidden", hypernet.generator_hidden}};
    j["oracle"] = {{"kappa", oracle.kappa}, {"beta", oracle.beta}};
    j["render"] = {{"width", render.width},
                   {"height", render.height},
                   {"fov_y", render.fov_y},
                   {"camera_radius", render.camera_radius},
                   {"t_near", render.t_near},
                   {"t_far", render.t_far},
                   {"samples_train", render.samples_train},
                   {"samples_eval", render.samples_eval},
                   {"background",
                    {render.background[0], render.background[1], render.background[2]}},
                   {"rays_per_image", rays_per_image}};
    j["train"] = {{"steps", train.steps},
                  {"prompts_per_step", train.prompts_per_step},
                  {"learning_rate", train.learning_rate},
                  {"adam_beta1", train.adam_beta1},
                  {"adam_beta2", train.adam_beta2},
                  {"adam_epsilon", train.adam_epsilon},
                  {"mode", train.mode},
                  {"teacher", train.teacher},
                  {"teacher_steps", train.teacher_steps},
                  {"eval_every", train.eval_every},
                  {"checkpoint_every", train.checkpoint_every},
                  {"epoch_steps", train.epoch_steps}};
    j["eval"] = {{"poses", eval.poses}, {"k_list", eval.k_list}};
    return j.dump(2) + "\n";
}

void Config::validate() const {
    if (dataset.shapes.empty() || dataset.attributes.empty())
        throw ConfigError("dataset: shapes and attributes must be non-empty");
    for (const auto& s : dataset.shapes)
        if (!parse_shape(s)) throw ConfigError("dataset: unknown shape '" + s + "'");
    for (const auto& a : dataset.attributes)
        if (!parse_attribute(a)) throw ConfigError("dataset: unknown attribute '" + a + "'");
    encoding.hash.validate();
    if (encoding.scene_radius <= 0) throw ConfigError("encoding: scene_radius must be positive");
    if (nerf.layers < 2) throw ConfigError("nerf: layers must be >= 2");
    if (hypernet.heads < 1 || hypernet.head_dim < 1)
        throw ConfigError("hypernet: heads and head_dim must be positive");
    if (train.learning_rate <= 0) throw ConfigError("train: learning_rate must be positive");
    if (train.prompts_per_step < 1) throw ConfigError("train: prompts_per_step must be >= 1");
    parse_mode(train.mode);
    if (train.teacher != "oracle" && train.teacher != "trained")
        throw ConfigError("train: teacher must be 'oracle' or 'trained', got '" + train.teacher +
                          "'");
    if (render.samples_train < 2 || render.samples_eval < 2)
        throw ConfigError("render: at least 2 samples per ray required");
    if (rays_per_image < 1 || rays_per_image > render.width * render.height)
        throw ConfigError("render: rays_per_image out of range");
    if (eval.poses < 1) throw ConfigError("eval: poses must be >= 1");
}

Hypernet<float> build_model(const Config& cfg, const DatasetManifest& manifest) {
    PromptVocab vocab;
    vocab.attributes = manifest.vocab_attributes();
    vocab.shapes = manifest.vocab_shapes();
    return Hypernet<float>::build(std::move(vocab), cfg.hypernet_config(),
                                  cfg.nerf_arch_no_input(), cfg.encoding.sinusoidal,
                                  cfg.encoding.hash, cfg.encoding.use_sinusoidal,
                                  cfg.encoding.use_hash, cfg.encoding.scene_radius, cfg.seed);
}

DatasetManifest manifest_from_config(const Config& cfg) {
    auto grid = make_grid(cfg.dataset.shapes, cfg.dataset.attributes);
    std::vector<SceneSpec> holdout;
    if (!cfg.dataset.holdout_prompts.empty()) {
        for (const auto& p : cfg.dataset.holdout_prompts) holdout.push_back(parse_prompt(p));
    } else {
        holdout = round_robin_holdout(cfg.dataset.shapes, cfg.dataset.attributes,
                                      cfg.dataset.holdout);
    }
    return build_manifest(grid, holdout, cfg.dataset.poses_per_scene, cfg.seed, cfg.render,
                          cfg.oracle.kappa, cfg.oracle.beta);
}

}  // namespace hf
