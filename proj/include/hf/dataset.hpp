#pragma once

#include <string>

#include "hf/scenes.hpp"

namespace hf {

struct RenderSettings {
    int width = 64;
    int height = 64;
    double fov_y = 0.5;
    double camera_radius = 4.0;
    double t_near = 2.0;
    double t_far = 6.0;
    int samples_train = 32;
    int samples_eval = 64;
    std::array<float, 3> background = {1.0f, 1.0f, 1.0f};
};

struct PosePoint {
    double azimuth = 0.0;    // radians
    double elevation = 0.0;  // radians, in [-pi/3, pi/3]
};

struct PromptEntry {
    SceneSpec spec;
    bool holdout = false;
};

// Everything needed to reproduce a dataset: the prompt grid with its holdout
// flags, the shared camera pose pool, and the oracle/render settings.
struct DatasetManifest {
    int version = 1;
    uint64_t seed = 0;
    RenderSettings render;
    double kappa = 50.0;
    double beta = 0.02;
    std::vector<PromptEntry> prompts;
    std::vector<PosePoint> poses;

    std::vector<int> train_indices() const;
    std::vector<int> holdout_indices() const;
    int index_of_prompt(const SceneSpec& spec) const;  // -1 if absent

    CameraPose camera(int pose_index) const;
    OracleField oracle(int prompt_index) const {
        return OracleField{prompts[static_cast<size_t>(prompt_index)].spec, kappa, beta};
    }

    // vocabulary actually present in the grid, in enum order
    std::vector<std::string> vocab_attributes() const;
    std::vector<std::string> vocab_shapes() const;

    std::string to_json() const;
    static DatasetManifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static DatasetManifest load(const std::string& path);
};

// Deterministic pose sampling on the camera sphere plus the prompt grid.
// holdout must be a subset of the grid or building fails.
DatasetManifest build_manifest(const std::vector<SceneSpec>& grid,
                               const std::vector<SceneSpec>& holdout, int poses_per_scene,
                               uint64_t seed, const RenderSettings& render, double kappa,
                               double beta);

// Round-robin holdout assignment: the i-th shape of the grid hides colors
// starting at its own index, so every shape and color stays individually
// represented in the training split whenever count < shapes * attrs.
std::vector<SceneSpec> round_robin_holdout(const std::vector<std::string>& shapes,
                                           const std::vector<std::string>& attributes, int count);

std::vector<SceneSpec> make_grid(const std::vector<std::string>& shapes,
                                 const std::vector<std::string>& attributes);

// Renders every prompt at every pose to <out_dir>/<slug>/pose_<k>.png and
// writes <out_dir>/manifest.json.
void write_dataset(const DatasetManifest& manifest, const std::string& out_dir);

}  // namespace hf
