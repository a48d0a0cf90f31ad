#pragma once

#include "hf/config.hpp"
#include "hf/dataset.hpp"
#include "hf/nerf.hpp"

namespace hf {

// A standalone per-scene NeRF with plain trainable weights and its own
// encoders, fit photometrically to oracle renders. Optional stand-in for the
// exact oracle on the teacher side of distillation.
struct TeacherNerf {
    SceneSpec spec;
    EncoderStack<float> enc;
    NerfArchitecture arch;
    GeneratedWeights<float> weights;
    NamedParams<float> params;

    static TeacherNerf build(const Config& cfg, const SceneSpec& spec, uint64_t seed);
    void register_params();
    void set_trainable(bool trainable);

    NerfResult<float> query(const Tensor<float>& points_world) const {
        return nerf_forward(points_world, weights, enc, arch);
    }

    // full-image render with deterministic midpoint sampling
    Image render(const CameraPose& cam, int samples, double t_near, double t_far,
                 const std::array<float, 3>& background, Image* opacity = nullptr) const;

    void save(const std::string& path, uint64_t config_hash) const;
    void load(const std::string& path, uint64_t config_hash, bool allow_mismatch = false);
};

struct TeacherTrainReport {
    int steps = 0;
    float final_loss = 0.0f;
    double psnr = 0.0;  // vs oracle on held-out poses, after training
};

// Photometric fit against oracle renders on the manifest's pose pool.
// Aborts with NanLossError (naming the step) if the loss diverges.
TeacherTrainReport train_teacher_nerf(TeacherNerf& teacher, const DatasetManifest& manifest,
                                      int steps, double lr, uint64_t seed, int rays_per_image);

// Mean PSNR of teacher renders vs oracle renders over the given poses.
double teacher_psnr(const TeacherNerf& teacher, const DatasetManifest& manifest,
                    const std::vector<int>& pose_indices);

}  // namespace hf
