#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "hf/eval.hpp"
#include "hf/png.hpp"

namespace fs = std::filesystem;

namespace {

void echo_config(const std::string& out_dir, const hf::Config& cfg) {
    fs::create_directories(out_dir);
    std::ofstream cf(fs::path(out_dir) / "config.json", std::ios::binary);
    cf << cfg.to_json_text();
    std::ofstream vf(fs::path(out_dir) / "version.txt", std::ios::binary);
    vf << hf::kVersion << "\n";
}

hf::Config load_config_or_default(const std::string& path) {
    if (path.empty()) return hf::Config{};
    return hf::Config::load(path);
}

void apply_grid_override(hf::Config& cfg, const std::string& grid) {
    if (grid.empty()) return;
    const auto x = grid.find('x');
    if (x == std::string::npos)
        throw hf::ConfigError("--grid expects <shapes>x<attributes>, e.g. 4x4");
    const int ns = std::stoi(grid.substr(0, x));
    const int na = std::stoi(grid.substr(x + 1));
    if (ns < 1 || ns > static_cast<int>(cfg.dataset.shapes.size()) || na < 1 ||
        na > static_cast<int>(cfg.dataset.attributes.size()))
        throw hf::ConfigError("--grid " + grid + " out of range for the configured vocabulary");
    cfg.dataset.shapes.resize(static_cast<size_t>(ns));
    cfg.dataset.attributes.resize(static_cast<size_t>(na));
}

struct LoadedModel {
    hf::Config cfg;
    hf::DatasetManifest manifest;
    hf::Hypernet<float> model;
    hf::CheckpointState state;
};

LoadedModel load_model(const std::string& ckpt, const std::string& data_dir,
                       std::string config_path, bool allow_mismatch) {
    if (config_path.empty())
        config_path = (fs::path(ckpt).parent_path() / "config.json").string();
    if (!fs::exists(config_path))
        throw hf::CheckpointError("no config found at " + config_path +
                                  " (pass --config explicitly)");
    LoadedModel lm{hf::Config::load(config_path),
                   hf::DatasetManifest::load((fs::path(data_dir) / "manifest.json").string()),
                   {},
                   {}};
    lm.model = hf::build_model(lm.cfg, lm.manifest);
    lm.state = hf::load_checkpoint(ckpt, lm.model.params, nullptr, lm.cfg.hash(), allow_mismatch);
    return lm;
}

std::vector<std::shared_ptr<hf::TeacherNerf>> ensure_teachers(const hf::Config& cfg,
                                                              const hf::DatasetManifest& manifest,
                                                              const std::string& data_dir) {
    const fs::path dir = fs::path(data_dir) / "teachers";
    fs::create_directories(dir);
    std::vector<std::shared_ptr<hf::TeacherNerf>> teachers(manifest.prompts.size());
    for (int pi : manifest.train_indices()) {
        const auto& spec = manifest.prompts[static_cast<size_t>(pi)].spec;
        auto teacher =
            std::make_shared<hf::TeacherNerf>(hf::TeacherNerf::build(cfg, spec, cfg.seed));
        const fs::path path = dir / (spec.slug() + ".ckpt");
        if (fs::exists(path)) {
            teacher->load(path.string(), cfg.hash());
        } else {
            std::cout << "training teacher for '" << spec.prompt() << "' ("
                      << cfg.train.teacher_steps << " steps)..." << std::flush;
            auto rep = hf::train_teacher_nerf(*teacher, manifest, cfg.train.teacher_steps,
                                              cfg.train.learning_rate, cfg.seed,
                                              cfg.rays_per_image);
            std::cout << " psnr " << rep.psnr << " dB\n";
            teacher->save(path.string(), cfg.hash());
        }
        teachers[static_cast<size_t>(pi)] = teacher;
    }
    return teachers;
}

std::vector<double> even_deltas(int frames) {
    std::vector<double> out;
    for (int i = 0; i < frames; ++i)
        out.push_back(frames == 1 ? 0.0 : static_cast<double>(i) / (frames - 1));
    return out;
}

int run(int argc, char** argv) {
    CLI::App app{"prompt-conditioned NeRF hypernetwork, distilled from procedural scene oracles"};
    app.require_subcommand(1);

    int threads = 0;
    bool deterministic = false;
    app.add_option("--threads", threads, "numeric thread budget (0 = auto)");
    app.add_flag("--deterministic", deterministic,
                 "single-threaded numeric paths (same as HF_DETERMINISTIC=1)");

    std::string config_path, out_dir, data_dir, ckpt_path;
    uint64_t seed_override = 0;
    bool seed_set = false;

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "build the procedural dataset and manifest");
    std::string grid;
    int holdout_override = -1, poses_override = -1;
    gen->add_option("--config", config_path, "config json");
    gen->add_option("--out", out_dir, "output directory")->required();
    gen->add_option("--grid", grid, "use the first <s>x<a> shapes/attributes, e.g. 4x4");
    gen->add_option("--holdout", holdout_override, "total held-out combinations (round-robin)");
    gen->add_option("--poses", poses_override, "poses per scene");
    gen->add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });
    bool skip_pngs = false;
    gen->add_flag("--no-pngs", skip_pngs, "write only the manifest (skip cached renders)");

    // distill
    auto* dis = app.add_subcommand("distill", "distill oracle scenes into the hypernetwork");
    int steps_override = -1;
    std::string mode_override, teacher_override, resume_path;
    dis->add_option("--config", config_path, "config json");
    dis->add_option("--data", data_dir, "dataset directory (with manifest.json)")->required();
    dis->add_option("--out", out_dir, "output directory")->required();
    dis->add_option("--steps", steps_override, "training steps override");
    dis->add_option("--mode", mode_override, "dynamic|static");
    dis->add_option("--teacher", teacher_override, "oracle|trained");
    dis->add_option("--resume", resume_path, "resume from checkpoint");
    dis->add_option("--seed", seed_override, "seed override")->each([&](const std::string&) {
        seed_set = true;
    });

    // eval
    auto* ev = app.add_subcommand("eval", "zero-shot + retrieval evaluation of a checkpoint");
    bool allow_mismatch = false;
    int poses_opt = -1;
    ev->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    ev->add_option("--data", data_dir, "dataset directory")->required();
    ev->add_option("--out", out_dir, "output directory")->required();
    ev->add_option("--config", config_path, "config json (default: next to the checkpoint)");
    ev->add_option("--poses", poses_opt, "eval poses");
    ev->add_flag("--allow-config-mismatch", allow_mismatch,
                 "load despite a config hash mismatch");

    // render
    auto* ren = app.add_subcommand("render", "render one prompt from a checkpoint");
    std::string prompt;
    int pose_index = 0;
    ren->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    ren->add_option("--data", data_dir, "dataset directory")->required();
    ren->add_option("--prompt", prompt, "\"<attribute> <shape>\"")->required();
    ren->add_option("--pose", pose_index, "pose index");
    ren->add_option("--out", out_dir, "output directory")->required();
    ren->add_option("--config", config_path, "config json (default: next to the checkpoint)");
    ren->add_flag("--allow-config-mismatch", allow_mismatch);

    // interp
    auto* itp = app.add_subcommand("interp", "interpolate between two prompts");
    std::string prompt_a, prompt_b, space = "ct";
    int frames = 11;
    itp->add_option("--ckpt", ckpt_path, "checkpoint")->required();
    itp->add_option("--data", data_dir, "dataset directory")->required();
    itp->add_option("--prompt-a", prompt_a, "\"<attribute> <shape>\"")->required();
    itp->add_option("--prompt-b", prompt_b, "\"<attribute> <shape>\"")->required();
    itp->add_option("--frames", frames, "number of evenly spaced deltas in [0,1]");
    itp->add_option("--pose", pose_index, "pose index");
    itp->add_option("--space", space, "ct|weights interpolation space");
    itp->add_option("--out", out_dir, "output directory")->required();
    itp->add_option("--config", config_path, "config json (default: next to the checkpoint)");
    itp->add_flag("--allow-config-mismatch", allow_mismatch);

    // ablate
    auto* abl = app.add_subcommand("ablate", "paired dynamic/static training comparison");
    std::string seeds_arg = "1,2,3,4,5";
    abl->add_option("--config", config_path, "config json");
    abl->add_option("--data", data_dir, "dataset directory")->required();
    abl->add_option("--out", out_dir, "output directory")->required();
    abl->add_option("--steps", steps_override, "training steps per arm");
    abl->add_option("--seeds", seeds_arg, "comma-separated seeds");

    CLI11_PARSE(app, argc, argv);

    if (deterministic) hf::set_num_threads(1);
    else if (threads > 0) hf::set_num_threads(threads);

    if (gen->parsed()) {
        hf::Config cfg = load_config_or_default(config_path);
        apply_grid_override(cfg, grid);
        if (holdout_override >= 0) cfg.dataset.holdout = holdout_override;
        if (poses_override > 0) cfg.dataset.poses_per_scene = poses_override;
        if (seed_set) cfg.seed = seed_override;
        cfg.validate();
        auto manifest = hf::manifest_from_config(cfg);
        if (skip_pngs) {
            fs::create_directories(out_dir);
            manifest.save((fs::path(out_dir) / "manifest.json").string());
        } else {
            hf::write_dataset(manifest, out_dir);
        }
        echo_config(out_dir, cfg);
        std::cout << "dataset: " << manifest.prompts.size() << " prompts ("
                  << manifest.train_indices().size() << " train / "
                  << manifest.holdout_indices().size() << " holdout), " << manifest.poses.size()
                  << " poses -> " << out_dir << "\n";
        return 0;
    }

    if (dis->parsed()) {
        hf::Config cfg = load_config_or_default(config_path);
        if (steps_override >= 0) cfg.train.steps = steps_override;
        if (!mode_override.empty()) cfg.train.mode = mode_override;
        if (!teacher_override.empty()) cfg.train.teacher = teacher_override;
        if (seed_set) cfg.seed = seed_override;
        cfg.validate();
        auto manifest = hf::DatasetManifest::load((fs::path(data_dir) / "manifest.json").string());
        hf::Distiller distiller(cfg, manifest, hf::parse_mode(cfg.train.mode));
        if (cfg.train.teacher == "trained")
            distiller.attach_teachers(ensure_teachers(cfg, manifest, data_dir));
        if (!resume_path.empty()) distiller.resume(resume_path);
        const std::string ckpt = distiller.run(out_dir);
        std::cout << "trained " << distiller.current_step() << " steps, loss ema "
                  << distiller.loss_ema() << ", checkpoint " << ckpt << "\n";
        return 0;
    }

    if (ev->parsed()) {
        auto lm = load_model(ckpt_path, data_dir, config_path, allow_mismatch);
        hf::EvalOptions opts;
        opts.poses = poses_opt > 0 ? poses_opt : lm.cfg.eval.poses;
        opts.k_list = lm.cfg.eval.k_list;
        opts.mode = hf::parse_mode(lm.cfg.train.mode);
        auto rep = hf::evaluate_model(lm.model, lm.manifest, opts, lm.cfg.hash());
        echo_config(out_dir, lm.cfg);
        rep.save((fs::path(out_dir) / "report.txt").string());
        hf::write_png((fs::path(out_dir) / "contact_sheet.png").string(),
                      hf::contact_sheet(lm.model, lm.manifest, 0, opts.mode,
                                        lm.manifest.render.samples_eval));
        std::cout << rep.to_text();
        return 0;
    }

    if (ren->parsed()) {
        auto lm = load_model(ckpt_path, data_dir, config_path, allow_mismatch);
        const auto spec = hf::parse_prompt(prompt);
        if (lm.manifest.index_of_prompt(spec) < 0)
            throw hf::VocabError("prompt '" + prompt + "' is not in the dataset grid");
        if (pose_index < 0 || pose_index >= static_cast<int>(lm.manifest.poses.size()))
            throw hf::ConfigError("pose index out of range");
        hf::Image img = hf::render_model_image(lm.model, spec, lm.manifest, pose_index,
                                               hf::parse_mode(lm.cfg.train.mode),
                                               lm.manifest.render.samples_eval);
        hf::Image ref = hf::oracle_render(
            lm.manifest.oracle(lm.manifest.index_of_prompt(spec)), lm.manifest.camera(pose_index),
            lm.manifest.render.samples_eval, lm.manifest.render.t_near, lm.manifest.render.t_far,
            lm.manifest.render.background);
        echo_config(out_dir, lm.cfg);
        const std::string png =
            (fs::path(out_dir) / (spec.slug() + "_pose" + std::to_string(pose_index) + ".png"))
                .string();
        hf::write_png(png, img);
        std::cout << png << "\npsnr " << hf::psnr_images(img, ref) << " dB\n";
        return 0;
    }

    if (itp->parsed()) {
        auto lm = load_model(ckpt_path, data_dir, config_path, allow_mismatch);
        const auto a = hf::parse_prompt(prompt_a);
        const auto b = hf::parse_prompt(prompt_b);
        const auto deltas = even_deltas(frames);
        const auto mode = hf::parse_mode(lm.cfg.train.mode);
        hf::InterpTrace tr;
        if (space == "ct") {
            tr = hf::interpolate_ct(lm.model, a, b, deltas, lm.manifest, pose_index, mode,
                                    lm.manifest.render.samples_eval);
        } else if (space == "weights") {
            tr = hf::interpolate_weights(lm.model, a, b, deltas, lm.manifest, pose_index, mode,
                                         lm.manifest.render.samples_eval);
        } else {
            throw hf::ConfigError("--space must be ct or weights");
        }
        echo_config(out_dir, lm.cfg);
        for (size_t i = 0; i < tr.frames.size(); ++i)
            hf::write_png((fs::path(out_dir) / ("frame_" + std::to_string(i) + ".png")).string(),
                          tr.frames[i].image);
        std::ofstream tf(fs::path(out_dir) / "trace.txt", std::ios::binary);
        tf << tr.to_text();
        std::cout << tr.to_text();
        return 0;
    }

    if (abl->parsed()) {
        hf::Config cfg = load_config_or_default(config_path);
        if (steps_override >= 0) cfg.train.steps = steps_override;
        cfg.validate();
        auto manifest = hf::DatasetManifest::load((fs::path(data_dir) / "manifest.json").string());
        std::vector<uint64_t> seeds;
        std::stringstream ss(seeds_arg);
        std::string tok;
        while (std::getline(ss, tok, ',')) seeds.push_back(std::stoull(tok));
        hf::AblationReport rep;
        hf::EvalOptions opts;
        opts.poses = cfg.eval.poses;
        opts.k_list = cfg.eval.k_list;
        for (uint64_t s : seeds) {
            std::cout << "seed " << s << "..." << std::flush;
            rep.seeds.push_back(hf::run_ablation_pair(cfg, manifest, s, opts));
            const auto& r = rep.seeds.back();
            std::cout << " dynamic " << r.dynamic_arm.mean_psnr << " dB vs static "
                      << r.static_arm.mean_psnr << " dB\n";
        }
        echo_config(out_dir, cfg);
        std::ofstream rf(fs::path(out_dir) / "ablation.txt", std::ios::binary);
        rf << rep.to_text();
        std::cout << rep.to_text();
        return 0;
    }

    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    hf::tune_allocator();
    try {
        return run(argc, argv);
    } catch (const hf::ConfigError& e) {
        std::cerr << "error:config: " << e.what() << "\n";
        return 2;
    } catch (const hf::VocabError& e) {
        std::cerr << "error:vocab: " << e.what() << "\n";
        return 3;
    } catch (const hf::CheckpointError& e) {
        std::cerr << "error:checkpoint: " << e.what() << "\n";
        return 4;
    } catch (const hf::IoError& e) {
        std::cerr << "error:io: " << e.what() << "\n";
        return 5;
    } catch (const hf::NanLossError& e) {
        std::cerr << "error:nan-abort: " << e.what() << "\n";
        return 6;
    } catch (const std::exception& e) {
        std::cerr << "error:internal: " << e.what() << "\n";
        return 10;
    }
}
