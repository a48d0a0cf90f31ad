#include "hf/teacher.hpp"

#include "hf/checkpoint.hpp"

namespace hf {

TeacherNerf TeacherNerf::build(const Config& cfg, const SceneSpec& spec, uint64_t seed) {
    TeacherNerf t;
    t.spec = spec;
    Pcg32 rng(seed ^ fnv1a64(spec.prompt()), /*stream=*/0x7ea0);
    t.enc.sin_cfg = cfg.encoding.sinusoidal;
    t.enc.grid.cfg = cfg.encoding.hash;
    t.enc.use_sinusoidal = cfg.encoding.use_sinusoidal;
    t.enc.use_hash = cfg.encoding.use_hash;
    t.enc.scene_radius = cfg.encoding.scene_radius;
    t.enc.grid.init(rng);

    t.arch = cfg.nerf_arch_no_input();
    t.arch.input_dim = t.enc.out_dim();
    t.arch.validate();
    for (int i = 1; i <= t.arch.num_layers; ++i) {
        const double a = 1.0 / std::sqrt(static_cast<double>(t.arch.layer_in(i)));
        t.weights.push_back(Tensor<float>::uniform({t.arch.layer_in(i), t.arch.layer_out(i)},
                                                   static_cast<float>(-a), static_cast<float>(a),
                                                   rng));
    }
    t.register_params();
    return t;
}

void TeacherNerf::register_params() {
    params.clear();
    for (size_t i = 0; i < weights.size(); ++i) {
        weights[i].set_requires_grad(true);
        params.push_back({"teacher/w" + std::to_string(i + 1), weights[i]});
    }
    enc.grid.tables.set_requires_grad(true);
    params.push_back({"teacher/hash", enc.grid.tables});
}

void TeacherNerf::set_trainable(bool trainable) {
    for (auto& p : params) p.tensor.set_requires_grad(trainable);
}

Image TeacherNerf::render(const CameraPose& cam, int samples, double t_near, double t_far,
                          const std::array<float, 3>& background, Image* opacity) const {
    RayBatch rays = make_rays(cam, t_near, t_far);
    const auto ts = sample_depths(rays.count(), samples, t_near, t_far, false, nullptr);
    const auto deltas = segment_deltas(ts, rays.count(), samples, t_far);
    auto pts = ray_points<float>(rays, ts, samples);
    auto res = query(pts);
    auto comp = composite(res.density, res.rgb, deltas, rays.count(), samples, background);
    Image img(cam.width, cam.height);
    img.pixels.assign(comp.pixels.data(), comp.pixels.data() + comp.pixels.numel());
    if (opacity) {
        *opacity = Image(cam.width, cam.height);
        for (int i = 0; i < rays.count(); ++i)
            for (int c = 0; c < 3; ++c)
                opacity->pixels[static_cast<size_t>(i) * 3 + c] = comp.opacity.at(i);
    }
    return img;
}

void TeacherNerf::save(const std::string& path, uint64_t config_hash) const {
    save_checkpoint(path, params, nullptr, CheckpointState{}, config_hash);
}

void TeacherNerf::load(const std::string& path, uint64_t config_hash, bool allow_mismatch) {
    load_checkpoint(path, params, nullptr, config_hash, allow_mismatch);
}

TeacherTrainReport train_teacher_nerf(TeacherNerf& teacher, const DatasetManifest& manifest,
                                      int steps, double lr, uint64_t seed, int rays_per_image) {
    const int n_pixels = manifest.render.width * manifest.render.height;
    rays_per_image = std::min(rays_per_image, n_pixels);
    Adam<float> opt;
    opt.lr = static_cast<float>(lr);
    opt.reset(teacher.params);
    Pcg32 rng(seed ^ fnv1a64(teacher.spec.prompt()), /*stream=*/0x7ea1);
    const OracleField field{teacher.spec, manifest.kappa, manifest.beta};

    std::vector<RayBatch> pose_rays(manifest.poses.size());
    TeacherTrainReport rep;
    rep.steps = steps;
    for (int step = 1; step <= steps; ++step) {
        const int pose = static_cast<int>(rng.next_below(static_cast<uint32_t>(manifest.poses.size())));
        if (pose_rays[static_cast<size_t>(pose)].count() == 0)
            pose_rays[static_cast<size_t>(pose)] =
                make_rays(manifest.camera(pose), manifest.render.t_near, manifest.render.t_far);
        const auto idx = sample_without_replacement(n_pixels, rays_per_image, rng);
        RayBatch sub = subset_rays(pose_rays[static_cast<size_t>(pose)], idx);
        const int S = manifest.render.samples_train;
        const auto ts = sample_depths(sub.count(), S, manifest.render.t_near,
                                      manifest.render.t_far, true, &rng);
        const auto deltas = segment_deltas(ts, sub.count(), S, manifest.render.t_far);

        std::vector<float> target(static_cast<size_t>(sub.count()) * 3);
        oracle_render_rays(field, sub, ts, S, manifest.render.background, target.data());
        auto target_t = Tensor<float>::from(std::move(target), {sub.count(), 3});

        zero_all_grads(teacher.params);
        Tape<float> tape;
        {
            TapeScope<float> scope(tape);
            auto pts = ray_points<float>(sub, ts, S);
            auto res = teacher.query(pts);
            auto comp =
                composite(res.density, res.rgb, deltas, sub.count(), S, manifest.render.background);
            auto loss = mse(comp.pixels, target_t);
            rep.final_loss = loss.item();
            if (!std::isfinite(rep.final_loss))
                throw NanLossError("teacher '" + teacher.spec.prompt() +
                                   "' diverged (non-finite loss at step " + std::to_string(step) +
                                   ")");
            tape.backward(loss);
        }
        opt.step(teacher.params);
    }
    std::vector<int> eval_poses;
    for (int k = 0; k < static_cast<int>(manifest.poses.size()) && k < 3; ++k)
        eval_poses.push_back(k);
    rep.psnr = teacher_psnr(teacher, manifest, eval_poses);
    return rep;
}

double teacher_psnr(const TeacherNerf& teacher, const DatasetManifest& manifest,
                    const std::vector<int>& pose_indices) {
    const OracleField field{teacher.spec, manifest.kappa, manifest.beta};
    double acc = 0;
    for (int k : pose_indices) {
        const CameraPose cam = manifest.camera(k);
        Image ref = oracle_render(field, cam, manifest.render.samples_eval, manifest.render.t_near,
                                  manifest.render.t_far, manifest.render.background);
        Image got = teacher.render(cam, manifest.render.samples_eval, manifest.render.t_near,
                                   manifest.render.t_far, manifest.render.background);
        acc += psnr_images(got, ref);
    }
    return acc / static_cast<double>(pose_indices.size());
}

}  // namespace hf
