#pragma once

#include "hf/distill.hpp"

namespace hf {

struct EvalOptions {
    int poses = 3;                       // first k poses of the manifest pool
    std::vector<int> k_list = {1, 3, 5};
    ConditioningMode mode = ConditioningMode::Dynamic;
};

struct PromptEvalRow {
    int prompt_index = 0;
    std::string prompt;
    bool holdout = false;
    double psnr = 0.0;            // mean over eval poses, vs oracle
    int nearest_prompt = 0;       // majority nearest oracle over poses
    std::vector<int> topk_hits;   // per k in k_list, number of pose-hits
};

// Zero-shot evaluation plus MSE-based retrieval in one render pass: every
// prompt (seen and held out) is rendered with no optimization and compared
// against oracle renders at matched poses.
struct EvalReport {
    std::vector<PromptEvalRow> rows;
    std::vector<int> k_list;
    int poses = 0;
    double seen_psnr = 0.0;
    double unseen_psnr = 0.0;
    std::vector<double> seen_topk;    // accuracy per k
    std::vector<double> unseen_topk;  // accuracy per k (0 when no holdouts)
    std::vector<std::vector<int>> confusion;  // [prompt][nearest] pose counts
    uint64_t config_hash = 0;

    bool collapsed() const;  // any two prompts retrieving the same oracle
    bool confusion_is_identity() const;
    std::string to_text() const;
    void save(const std::string& path) const;
};

EvalReport evaluate_model(const Hypernet<float>& model, const DatasetManifest& manifest,
                          const EvalOptions& opts, uint64_t config_hash = 0);

// Scores an externally produced render set (renders[prompt][pose]) against
// the oracle references; evaluate_model and the controls all route through
// this.
EvalReport score_render_set(const DatasetManifest& manifest,
                            const std::vector<std::vector<Image>>& renders,
                            const EvalOptions& opts, uint64_t config_hash = 0);

// Spec-named slices of the shared evaluation pass.
inline EvalReport zero_shot_eval(const Hypernet<float>& model, const DatasetManifest& manifest,
                                 const EvalOptions& opts, uint64_t config_hash = 0) {
    return evaluate_model(model, manifest, opts, config_hash);
}
EvalReport retrieval_eval(const Hypernet<float>& model, const DatasetManifest& manifest,
                          const EvalOptions& opts, uint64_t config_hash = 0);

// Oracle-vs-oracle control: retrieval of the oracle set against itself.
// Top-1 is exact and PSNR caps at 99 dB.
EvalReport oracle_control_report(const DatasetManifest& manifest, const EvalOptions& opts);

// Contact sheet: one row per shape, one column per attribute, holdout cells
// rendered zero-shot like everything else.
Image contact_sheet(const Hypernet<float>& model, const DatasetManifest& manifest, int pose_index,
                    ConditioningMode mode, int samples);

// ---------------------------------------------------------------------------

struct InterpFrame {
    double delta = 0.0;
    Image image;
    std::array<double, 3> fg_color = {0, 0, 0};  // mean over pixels with opacity > 0.5
    bool has_foreground = false;
};

struct InterpTrace {
    std::vector<InterpFrame> frames;
    double total_variation = 0.0;     // sum of consecutive fg color distances
    double endpoint_distance = 0.0;   // straight-line distance between end fg colors
    bool endpoint_a_exact = false;    // delta=0 frame bitwise equals the plain render
    bool endpoint_b_exact = false;
    std::string to_text() const;
};

// CT-space interpolation: CT_d = (1-d) CT_a + d CT_b, weight generation and
// rendering per delta. Deltas 0 and 1 reproduce the plain renders exactly.
InterpTrace interpolate_ct(const Hypernet<float>& model, const SceneSpec& a, const SceneSpec& b,
                           const std::vector<double>& deltas, const DatasetManifest& manifest,
                           int pose_index, ConditioningMode mode, int samples);

// Optional weight-space variant: the endpoint GeneratedWeights are lerped.
InterpTrace interpolate_weights(const Hypernet<float>& model, const SceneSpec& a,
                                const SceneSpec& b, const std::vector<double>& deltas,
                                const DatasetManifest& manifest, int pose_index,
                                ConditioningMode mode, int samples);

// ---------------------------------------------------------------------------

struct AblationArm {
    ConditioningMode mode;
    double mean_psnr = 0.0;
    std::vector<double> per_scene_psnr;
    bool collapsed = false;
    bool confusion_identity = false;
};

struct AblationSeedResult {
    uint64_t seed = 0;
    AblationArm dynamic_arm;
    AblationArm static_arm;
};

struct AblationReport {
    std::vector<AblationSeedResult> seeds;
    std::string to_text() const;
};

// Trains matched dynamic/static pairs (identical init, seeds, budgets; the
// parameter count is identical by construction) and evaluates both arms.
AblationSeedResult run_ablation_pair(const Config& base_cfg, const DatasetManifest& manifest,
                                     uint64_t seed, const EvalOptions& opts);

}  // namespace hf
