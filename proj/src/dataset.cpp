#include "hf/dataset.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "hf/png.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hf {

std::vector<int> DatasetManifest::train_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < prompts.size(); ++i)
        if (!prompts[i].holdout) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> DatasetManifest::holdout_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < prompts.size(); ++i)
        if (prompts[i].holdout) out.push_back(static_cast<int>(i));
    return out;
}

int DatasetManifest::index_of_prompt(const SceneSpec& spec) const {
    for (size_t i = 0; i < prompts.size(); ++i)
        if (prompts[i].spec == spec) return static_cast<int>(i);
    return -1;
}

CameraPose DatasetManifest::camera(int pose_index) const {
    const PosePoint& pp = poses.at(static_cast<size_t>(pose_index));
    CameraPose cam;
    const double ce = std::cos(pp.elevation);
    cam.position = {render.camera_radius * ce * std::cos(pp.azimuth),
                    render.camera_radius * ce * std::sin(pp.azimuth),
                    render.camera_radius * std::sin(pp.elevation)};
    cam.look_at = {0, 0, 0};
    cam.up = {0, 0, 1};
    cam.fov_y = render.fov_y;
    cam.width = render.width;
    cam.height = render.height;
    return cam;
}

std::vector<std::string> DatasetManifest::vocab_attributes() const {
    std::vector<std::string> out;
    for (const auto& name : all_attribute_names()) {
        for (const auto& p : prompts)
            if (attribute_name(p.spec.attribute) == name) {
                out.push_back(name);
                break;
            }
    }
    return out;
}

std::vector<std::string> DatasetManifest::vocab_shapes() const {
    std::vector<std::string> out;
    for (const auto& name : all_shape_names()) {
        for (const auto& p : prompts)
            if (shape_name(p.spec.shape) == name) {
                out.push_back(name);
                break;
            }
    }
    return out;
}

std::string DatasetManifest::to_json() const {
    json j;
    j["version"] = version;
    j["seed"] = seed;
    j["render"] = {{"width", render.width},
                   {"height", render.height},
                   {"fov_y", render.fov_y},
                   {"camera_radius", render.camera_radius},
                   {"t_near", render.t_near},
                   {"t_far", render.t_far},
                   {"samples_train", render.samples_train},
                   {"samples_eval", render.samples_eval},
                   {"background", {render.background[0], render.background[1],
                                   render.background[2]}}};
    j["oracle"] = {{"kappa", kappa}, {"beta", beta}};
    j["poses"] = json::array();
    for (const auto& p : poses)
        j["poses"].push_back({{"azimuth", p.azimuth}, {"elevation", p.elevation}});
    j["prompts"] = json::array();
    for (const auto& p : prompts)
        j["prompts"].push_back({{"prompt", p.spec.prompt()},
                                {"attribute", attribute_name(p.spec.attribute)},
                                {"shape", shape_name(p.spec.shape)},
                                {"holdout", p.holdout}});
    return j.dump(2) + "\n";
}

DatasetManifest DatasetManifest::from_json(const std::string& text) {
    json j = json::parse(text);
    DatasetManifest m;
    m.version = j.at("version").get<int>();
    if (m.version != 1)
        throw ConfigError("manifest version " + std::to_string(m.version) + " unsupported");
    m.seed = j.at("seed").get<uint64_t>();
    const auto& r = j.at("render");
    m.render.width = r.at("width").get<int>();
    m.render.height = r.at("height").get<int>();
    m.render.fov_y = r.at("fov_y").get<double>();
    m.render.camera_radius = r.at("camera_radius").get<double>();
    m.render.t_near = r.at("t_near").get<double>();
    m.render.t_far = r.at("t_far").get<double>();
    m.render.samples_train = r.at("samples_train").get<int>();
    m.render.samples_eval = r.at("samples_eval").get<int>();
    for (int c = 0; c < 3; ++c) m.render.background[static_cast<size_t>(c)] = r.at("background").at(c).get<float>();
    m.kappa = j.at("oracle").at("kappa").get<double>();
    m.beta = j.at("oracle").at("beta").get<double>();
    for (const auto& pj : j.at("poses"))
        m.poses.push_back({pj.at("azimuth").get<double>(), pj.at("elevation").get<double>()});
    for (const auto& pj : j.at("prompts")) {
        PromptEntry e;
        e.spec = parse_prompt(pj.at("prompt").get<std::string>());
        e.holdout = pj.at("holdout").get<bool>();
        m.prompts.push_back(e);
    }
    return m;
}

void DatasetManifest::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write manifest: " + path);
    f << to_json();
}

DatasetManifest DatasetManifest::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot read manifest: " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::vector<SceneSpec> make_grid(const std::vector<std::string>& shapes,
                                 const std::vector<std::string>& attributes) {
    std::vector<SceneSpec> grid;
    for (const auto& s : shapes)
        for (const auto& a : attributes) {
            auto sk = parse_shape(s);
            auto ak = parse_attribute(a);
            if (!sk) throw VocabError("unknown shape '" + s + "'");
            if (!ak) throw VocabError("unknown attribute '" + a + "'");
            grid.push_back({*sk, *ak});
        }
    return grid;
}

std::vector<SceneSpec> round_robin_holdout(const std::vector<std::string>& shapes,
                                           const std::vector<std::string>& attributes, int count) {
    const int ns = static_cast<int>(shapes.size());
    const int na = static_cast<int>(attributes.size());
    if (count < 0 || count > ns * na)
        throw ConfigError("holdout count " + std::to_string(count) + " out of range for a " +
                          std::to_string(ns) + "x" + std::to_string(na) + " grid");
    std::vector<SceneSpec> out;
    // distribute evenly over shapes, offsetting colors by the shape index
    for (int n = 0; n < count; ++n) {
        const int si = n % ns;
        const int round = n / ns;
        const int ai = (si + round) % na;
        out.push_back({*parse_shape(shapes[static_cast<size_t>(si)]),
                       *parse_attribute(attributes[static_cast<size_t>(ai)])});
    }
    return out;
}

DatasetManifest build_manifest(const std::vector<SceneSpec>& grid,
                               const std::vector<SceneSpec>& holdout, int poses_per_scene,
                               uint64_t seed, const RenderSettings& render, double kappa,
                               double beta) {
    for (const auto& h : holdout)
        if (std::find(grid.begin(), grid.end(), h) == grid.end())
            throw ConfigError("holdout prompt '" + h.prompt() + "' is not part of the grid");
    DatasetManifest m;
    m.seed = seed;
    m.render = render;
    m.kappa = kappa;
    m.beta = beta;
    for (const auto& spec : grid) {
        const bool hold = std::find(holdout.begin(), holdout.end(), spec) != holdout.end();
        m.prompts.push_back({spec, hold});
    }
    Pcg32 rng(seed, /*stream=*/0x705e5);
    constexpr double kTwoPi = 6.283185307179586;
    constexpr double kMaxElev = 1.0471975511965976;  // pi/3
    for (int k = 0; k < poses_per_scene; ++k) {
        PosePoint p;
        p.azimuth = rng.uniform(0.0, kTwoPi);
        p.elevation = rng.uniform(-kMaxElev, kMaxElev);
        m.poses.push_back(p);
    }
    return m;
}

void write_dataset(const DatasetManifest& manifest, const std::string& out_dir) {
    fs::create_directories(out_dir);
    manifest.save((fs::path(out_dir) / "manifest.json").string());
    for (size_t pi = 0; pi < manifest.prompts.size(); ++pi) {
        const auto& entry = manifest.prompts[pi];
        const fs::path dir = fs::path(out_dir) / entry.spec.slug();
        fs::create_directories(dir);
        const OracleField field = manifest.oracle(static_cast<int>(pi));
        for (size_t k = 0; k < manifest.poses.size(); ++k) {
            const CameraPose cam = manifest.camera(static_cast<int>(k));
            Image img = oracle_render(field, cam, manifest.render.samples_eval,
                                      manifest.render.t_near, manifest.render.t_far,
                                      manifest.render.background);
            write_png((dir / ("pose_" + std::to_string(k) + ".png")).string(), img);
        }
    }
}

}  // namespace hf
