#pragma once

#include <map>
#include <memory>

#include "hf/checkpoint.hpp"
#include "hf/config.hpp"
#include "hf/teacher.hpp"

namespace hf {

// One prompt's render on a ray subset, differentiable through the model.
template <typename R>
struct RaysRender {
    Tensor<R> pixels;   // [r x 3]
    Tensor<R> opacity;  // [r]
    HypernetForward<R> fwd;
};

template <typename R>
RaysRender<R> render_prompt_on_rays(const Hypernet<R>& model, const std::string& attribute,
                                    const std::string& shape, ConditioningMode mode,
                                    const RayBatch& rays, const std::vector<double>& ts,
                                    int samples, const std::array<R, 3>& background,
                                    bool keep_activations = false) {
    const auto deltas = segment_deltas(ts, rays.count(), samples, rays.t_far);
    auto pts = ray_points<R>(rays, ts, samples);
    RaysRender<R> out;
    out.fwd = model.forward(attribute, shape, pts, mode, keep_activations);
    auto comp = composite(out.fwd.density, out.fwd.rgb, deltas, rays.count(), samples, background);
    out.pixels = comp.pixels;
    out.opacity = comp.opacity;
    return out;
}

// Full-image render with deterministic midpoint sampling.
Image render_model_image(const Hypernet<float>& model, const SceneSpec& spec,
                         const DatasetManifest& manifest, int pose_index, ConditioningMode mode,
                         int samples, Image* opacity = nullptr);

Image render_model_image_with_ct(const Hypernet<float>& model, const Tensor<float>& ct,
                                 const DatasetManifest& manifest, int pose_index,
                                 ConditioningMode mode, int samples, Image* opacity = nullptr);

// Distillation loss over paired images: mean over prompts of the per-pixel
// mean squared difference.
template <typename R>
Tensor<R> distill_loss(const std::vector<Tensor<R>>& student,
                       const std::vector<Tensor<R>>& teacher) {
    if (student.size() != teacher.size() || student.empty())
        throw ShapeError("distill_loss: mismatched or empty image lists");
    Tensor<R> acc = mse(student[0], teacher[0]);
    for (size_t i = 1; i < student.size(); ++i) acc = add(acc, mse(student[i], teacher[i]));
    return scale(acc, R(1) / static_cast<R>(student.size()));
}

struct StepRecord {
    uint64_t step = 0;
    float loss = 0.0f;
    float loss_ema = 0.0f;
};

// Algorithm: per step, sample n training prompts without replacement and one
// pose each; render teacher and student on the same ray subset with the same
// sample depths; step Adam on the distillation loss.
class Distiller {
public:
    Distiller(const Config& cfg, const DatasetManifest& manifest, ConditioningMode mode);

    StepRecord step();
    // Runs to cfg.train.steps with logging and checkpoints under out_dir.
    // Returns the final checkpoint path.
    std::string run(const std::string& out_dir);
    void resume(const std::string& checkpoint_path);

    Hypernet<float>& model() { return model_; }
    const Hypernet<float>& model() const { return model_; }
    const DatasetManifest& manifest() const { return manifest_; }
    const Config& config() const { return cfg_; }
    ConditioningMode mode() const { return mode_; }
    uint64_t current_step() const { return state_.train_step; }
    float loss_ema() const { return state_.loss_ema; }

    void save(const std::string& path) const;

    // teacher NeRFs for teacher="trained"; index-aligned with manifest prompts
    void attach_teachers(std::vector<std::shared_ptr<TeacherNerf>> teachers);

    // gradient coverage by parameter group after a step (criterion hook)
    std::map<std::string, bool> last_step_group_coverage() const;

private:
    Config cfg_;
    DatasetManifest manifest_;
    ConditioningMode mode_;
    Hypernet<float> model_;
    Adam<float> opt_;
    CheckpointState state_;
    Pcg32 rng_;
    std::vector<int> train_prompts_;
    std::vector<RayBatch> pose_rays_;  // lazily built per pose
    std::vector<std::shared_ptr<TeacherNerf>> teachers_;

    const RayBatch& rays_for_pose(int pose);
    std::vector<float> teacher_pixels(int prompt_index, const RayBatch& sub,
                                      const std::vector<double>& ts, int samples);
};

}  // namespace hf
