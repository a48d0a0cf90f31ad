#include "hf/distill.hpp"

#include <cinttypes>
#include <filesystem>
#include <fstream>

namespace fs = std::filesystem;

namespace hf {

Image render_model_image_with_ct(const Hypernet<float>& model, const Tensor<float>& ct,
                                 const DatasetManifest& manifest, int pose_index,
                                 ConditioningMode mode, int samples, Image* opacity) {
    const auto& r = manifest.render;
    RayBatch rays = make_rays(manifest.camera(pose_index), r.t_near, r.t_far);
    const auto ts = sample_depths(rays.count(), samples, r.t_near, r.t_far, false, nullptr);
    const auto deltas = segment_deltas(ts, rays.count(), samples, r.t_far);
    auto pts = ray_points<float>(rays, ts, samples);
    auto fwd = model.forward_with_ct(ct, pts, mode, /*keep_activations=*/false);
    auto comp = composite(fwd.density, fwd.rgb, deltas, rays.count(), samples, r.background);
    Image img(r.width, r.height);
    img.pixels.assign(comp.pixels.data(), comp.pixels.data() + comp.pixels.numel());
    if (opacity) {
        *opacity = Image(r.width, r.height);
        for (int i = 0; i < rays.count(); ++i)
            for (int c = 0; c < 3; ++c)
                opacity->pixels[static_cast<size_t>(i) * 3 + c] = comp.opacity.at(i);
    }
    return img;
}

Image render_model_image(const Hypernet<float>& model, const SceneSpec& spec,
                         const DatasetManifest& manifest, int pose_index, ConditioningMode mode,
                         int samples, Image* opacity) {
    auto ct = model.conditioning_token(attribute_name(spec.attribute), shape_name(spec.shape));
    return render_model_image_with_ct(model, ct, manifest, pose_index, mode, samples, opacity);
}

Distiller::Distiller(const Config& cfg, const DatasetManifest& manifest, ConditioningMode mode)
    : cfg_(cfg),
      manifest_(manifest),
      mode_(mode),
      model_(build_model(cfg, manifest)),
      rng_(cfg.seed, /*stream=*/0xd157111) {
    tune_allocator();
    opt_.lr = static_cast<float>(cfg.train.learning_rate);
    opt_.beta1 = static_cast<float>(cfg.train.adam_beta1);
    opt_.beta2 = static_cast<float>(cfg.train.adam_beta2);
    opt_.eps = static_cast<float>(cfg.train.adam_epsilon);
    opt_.reset(model_.params);
    train_prompts_ = manifest_.train_indices();
    if (static_cast<int>(train_prompts_.size()) < cfg.train.prompts_per_step)
        throw ConfigError("train: prompts_per_step " + std::to_string(cfg.train.prompts_per_step) +
                          " exceeds the " + std::to_string(train_prompts_.size()) +
                          " training prompts in the manifest");
    pose_rays_.resize(manifest_.poses.size());
    state_.rng_state = rng_.state();
    state_.rng_inc = rng_.inc();
}

void Distiller::attach_teachers(std::vector<std::shared_ptr<TeacherNerf>> teachers) {
    if (teachers.size() != manifest_.prompts.size())
        throw ConfigError("teacher set must be index-aligned with the manifest prompts");
    for (auto& t : teachers)
        if (t) t->set_trainable(false);  // teachers are frozen during distillation
    teachers_ = std::move(teachers);
}

const RayBatch& Distiller::rays_for_pose(int pose) {
    auto& slot = pose_rays_[static_cast<size_t>(pose)];
    if (slot.count() == 0)
        slot = make_rays(manifest_.camera(pose), manifest_.render.t_near, manifest_.render.t_far);
    return slot;
}

std::vector<float> Distiller::teacher_pixels(int prompt_index, const RayBatch& sub,
                                             const std::vector<double>& ts, int samples) {
    std::vector<float> out(static_cast<size_t>(sub.count()) * 3);
    if (cfg_.train.teacher == "oracle") {
        oracle_render_rays(manifest_.oracle(prompt_index), sub, ts, samples,
                           manifest_.render.background, out.data());
        return out;
    }
    const auto& teacher = teachers_.at(static_cast<size_t>(prompt_index));
    if (!teacher)
        throw ConfigError("no trained teacher attached for prompt '" +
                          manifest_.prompts[static_cast<size_t>(prompt_index)].spec.prompt() + "'");
    const auto deltas = segment_deltas(ts, sub.count(), samples, sub.t_far);
    auto pts = ray_points<float>(sub, ts, samples);
    auto res = teacher->query(pts);  // frozen params: nothing records on the tape
    auto comp = composite(res.density, res.rgb, deltas, sub.count(), samples,
                          manifest_.render.background);
    out.assign(comp.pixels.data(), comp.pixels.data() + comp.pixels.numel());
    return out;
}

StepRecord Distiller::step() {
    const int n = cfg_.train.prompts_per_step;
    const int n_pixels = manifest_.render.width * manifest_.render.height;
    const int rays_n = std::min(cfg_.rays_per_image, n_pixels);
    const int S = manifest_.render.samples_train;

    // prompt and pose sampling (without replacement within the step)
    const auto picks =
        sample_without_replacement(static_cast<int>(train_prompts_.size()), n, rng_);

    model_.zero_grads();
    Tape<float> tape;
    StepRecord rec;
    {
        TapeScope<float> scope(tape);
        std::vector<Tensor<float>> student, teacher;
        for (int pick : picks) {
            const int prompt_index = train_prompts_[static_cast<size_t>(pick)];
            const auto& spec = manifest_.prompts[static_cast<size_t>(prompt_index)].spec;
            const int pose =
                static_cast<int>(rng_.next_below(static_cast<uint32_t>(manifest_.poses.size())));
            const auto idx = sample_without_replacement(n_pixels, rays_n, rng_);
            RayBatch sub = subset_rays(rays_for_pose(pose), idx);
            const auto ts =
                sample_depths(sub.count(), S, sub.t_near, sub.t_far, /*jitter=*/true, &rng_);

            teacher.push_back(
                Tensor<float>::from(teacher_pixels(prompt_index, sub, ts, S), {sub.count(), 3}));
            auto render = render_prompt_on_rays<float>(
                model_, attribute_name(spec.attribute), shape_name(spec.shape), mode_, sub, ts, S,
                manifest_.render.background);
            student.push_back(render.pixels);
        }
        Tensor<float> loss = distill_loss(student, teacher);
        rec.loss = loss.item();
        if (!std::isfinite(rec.loss))
            throw NanLossError("distillation loss became non-finite at step " +
                               std::to_string(state_.train_step + 1) +
                               "; resume from the last checkpoint with a different seed or lower "
                               "learning rate");
        tape.backward(loss);
    }
    opt_.step(model_.params);

    state_.train_step += 1;
    state_.loss_ema = state_.train_step == 1 ? rec.loss
                                             : 0.99f * state_.loss_ema + 0.01f * rec.loss;
    state_.rng_state = rng_.state();
    state_.rng_inc = rng_.inc();
    state_.adam_step = opt_.step_count;
    rec.step = state_.train_step;
    rec.loss_ema = state_.loss_ema;
    return rec;
}

std::map<std::string, bool> Distiller::last_step_group_coverage() const {
    std::map<std::string, bool> cover = {
        {"embed", false}, {"tx", false}, {"gen", false}, {"hash", false}};
    for (const auto& p : model_.params) {
        const std::string group = p.name.substr(0, p.name.find('/'));
        auto it = cover.find(group);
        if (it == cover.end()) continue;
        if (p.tensor.has_grad())
            for (float g : p.tensor.grad())
                if (g != 0.0f) {
                    it->second = true;
                    break;
                }
    }
    return cover;
}

void Distiller::save(const std::string& path) const {
    save_checkpoint(path, const_cast<Hypernet<float>&>(model_).params, &opt_, state_, cfg_.hash());
}

void Distiller::resume(const std::string& checkpoint_path) {
    state_ = load_checkpoint(checkpoint_path, model_.params, &opt_, cfg_.hash());
    rng_.restore(state_.rng_state, state_.rng_inc);
}

std::string Distiller::run(const std::string& out_dir) {
    fs::create_directories(out_dir);
    {
        std::ofstream cf(fs::path(out_dir) / "config.json", std::ios::binary);
        cf << cfg_.to_json_text();
        std::ofstream vf(fs::path(out_dir) / "version.txt", std::ios::binary);
        vf << kVersion << "\n";
    }
    std::ofstream log(fs::path(out_dir) / "metrics.jsonl",
                      state_.train_step > 0 ? std::ios::app : std::ios::trunc);
    if (!log) throw IoError("cannot open metrics log under " + out_dir);
    char line[256];
    if (state_.train_step == 0) {
        // every trainable lives in the hypernetwork; the generated NeRF owns none
        std::snprintf(line, sizeof(line),
                      "{\"step\":0,\"hypernet_params\":%zu,\"nerf_params\":0,\"mode\":\"%s\"}",
                      model_.param_count(), mode_name(mode_).c_str());
        log << line << "\n";
    }

    const std::string last_path = (fs::path(out_dir) / "last.ckpt").string();
    if (state_.train_step == 0 && cfg_.train.steps == 0) save(last_path);

    double epoch_loss = 0.0;
    int epoch_count = 0;
    while (state_.train_step < static_cast<uint64_t>(cfg_.train.steps)) {
        StepRecord rec;
        try {
            rec = step();
        } catch (const NanLossError& e) {
            save((fs::path(out_dir) / "abort.ckpt").string());
            throw NanLossError(std::string(e.what()) + " (state saved to " +
                               (fs::path(out_dir) / "abort.ckpt").string() + ")");
        }
        std::snprintf(line, sizeof(line), "{\"step\":%" PRIu64 ",\"loss\":%.9g,\"ema\":%.9g}",
                      rec.step, static_cast<double>(rec.loss), static_cast<double>(rec.loss_ema));
        log << line << "\n";
        epoch_loss += rec.loss;
        epoch_count += 1;
        if (cfg_.train.epoch_steps > 0 &&
            rec.step % static_cast<uint64_t>(cfg_.train.epoch_steps) == 0) {
            std::snprintf(line, sizeof(line),
                          "{\"step\":%" PRIu64 ",\"epoch_mean_loss\":%.9g}", rec.step,
                          epoch_loss / epoch_count);
            log << line << "\n";
            log.flush();
            epoch_loss = 0.0;
            epoch_count = 0;
        }
        if (cfg_.train.eval_every > 0 &&
            rec.step % static_cast<uint64_t>(cfg_.train.eval_every) == 0) {
            // coarse progress probe: half-resolution renders of the training
            // prompts at pose 0 (the eval command does the full protocol)
            DatasetManifest probe = manifest_;
            probe.render.width = std::max(8, manifest_.render.width / 2);
            probe.render.height = std::max(8, manifest_.render.height / 2);
            double mean_psnr = 0;
            for (int pi : train_prompts_) {
                const auto& spec = probe.prompts[static_cast<size_t>(pi)].spec;
                Image img = render_model_image(model_, spec, probe, 0, mode_,
                                               probe.render.samples_train);
                Image ref = oracle_render(probe.oracle(pi), probe.camera(0),
                                          probe.render.samples_train, probe.render.t_near,
                                          probe.render.t_far, probe.render.background);
                mean_psnr += psnr_images(img, ref);
            }
            mean_psnr /= static_cast<double>(train_prompts_.size());
            std::snprintf(line, sizeof(line),
                          "{\"step\":%" PRIu64 ",\"train_psnr_probe\":%.9g}", rec.step, mean_psnr);
            log << line << "\n";
            log.flush();
        }
        if (cfg_.train.checkpoint_every > 0 &&
            rec.step % static_cast<uint64_t>(cfg_.train.checkpoint_every) == 0)
            save(last_path);
    }
    save(last_path);
    log.flush();
    return last_path;
}

}  // namespace hf
