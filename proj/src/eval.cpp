#include "hf/eval.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

namespace hf {

namespace {

double image_mse(const std::vector<float>& a, const std::vector<float>& b) {
    double s = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - b[i];
        s += d * d;
    }
    return s / static_cast<double>(a.size());
}

}  // namespace

EvalReport score_render_set(const DatasetManifest& manifest,
                            const std::vector<std::vector<Image>>& renders,
                            const EvalOptions& opts, uint64_t config_hash) {
    const int n_prompts = static_cast<int>(manifest.prompts.size());
    const int n_poses = static_cast<int>(renders[0].size());

    // oracle reference set at matched poses
    std::vector<std::vector<Image>> oracle(static_cast<size_t>(n_prompts));
    for (int p = 0; p < n_prompts; ++p) {
        oracle[static_cast<size_t>(p)].reserve(static_cast<size_t>(n_poses));
        for (int k = 0; k < n_poses; ++k)
            oracle[static_cast<size_t>(p)].push_back(oracle_render(
                manifest.oracle(p), manifest.camera(k), manifest.render.samples_eval,
                manifest.render.t_near, manifest.render.t_far, manifest.render.background));
    }

    EvalReport rep;
    rep.k_list = opts.k_list;
    for (int& k : rep.k_list) k = std::min(k, n_prompts);
    rep.poses = n_poses;
    rep.config_hash = config_hash;
    rep.confusion.assign(static_cast<size_t>(n_prompts),
                         std::vector<int>(static_cast<size_t>(n_prompts), 0));

    for (int p = 0; p < n_prompts; ++p) {
        PromptEvalRow row;
        row.prompt_index = p;
        row.prompt = manifest.prompts[static_cast<size_t>(p)].spec.prompt();
        row.holdout = manifest.prompts[static_cast<size_t>(p)].holdout;
        row.topk_hits.assign(rep.k_list.size(), 0);
        double psnr_acc = 0;
        for (int k = 0; k < n_poses; ++k) {
            const auto& img = renders[static_cast<size_t>(p)][static_cast<size_t>(k)];
            psnr_acc += psnr_from_mse(image_mse(img.pixels, oracle[static_cast<size_t>(p)][static_cast<size_t>(k)].pixels));
            // rank oracle renders at this pose by MSE (stable: ties by index)
            std::vector<std::pair<double, int>> dist;
            dist.reserve(static_cast<size_t>(n_prompts));
            for (int q = 0; q < n_prompts; ++q)
                dist.emplace_back(image_mse(img.pixels, oracle[static_cast<size_t>(q)][static_cast<size_t>(k)].pixels), q);
            std::stable_sort(dist.begin(), dist.end(),
                             [](const auto& x, const auto& y) { return x.first < y.first; });
            rep.confusion[static_cast<size_t>(p)][static_cast<size_t>(dist[0].second)] += 1;
            int rank = n_prompts;
            for (int r = 0; r < n_prompts; ++r)
                if (dist[static_cast<size_t>(r)].second == p) {
                    rank = r;
                    break;
                }
            for (size_t ki = 0; ki < rep.k_list.size(); ++ki)
                if (rank < rep.k_list[ki]) row.topk_hits[ki] += 1;
        }
        row.psnr = psnr_acc / n_poses;
        // majority nearest over poses
        int best = 0;
        for (int q = 1; q < n_prompts; ++q)
            if (rep.confusion[static_cast<size_t>(p)][static_cast<size_t>(q)] >
                rep.confusion[static_cast<size_t>(p)][static_cast<size_t>(best)])
                best = q;
        row.nearest_prompt = best;
        rep.rows.push_back(std::move(row));
    }

    // aggregate seen/unseen
    int n_seen = 0, n_unseen = 0;
    rep.seen_topk.assign(rep.k_list.size(), 0.0);
    rep.unseen_topk.assign(rep.k_list.size(), 0.0);
    for (const auto& row : rep.rows) {
        auto& psnr_slot = row.holdout ? rep.unseen_psnr : rep.seen_psnr;
        auto& topk_slot = row.holdout ? rep.unseen_topk : rep.seen_topk;
        auto& count = row.holdout ? n_unseen : n_seen;
        psnr_slot += row.psnr;
        for (size_t ki = 0; ki < rep.k_list.size(); ++ki)
            topk_slot[ki] += static_cast<double>(row.topk_hits[ki]) / n_poses;
        count += 1;
    }
    if (n_seen > 0) {
        rep.seen_psnr /= n_seen;
        for (auto& v : rep.seen_topk) v /= n_seen;
    }
    if (n_unseen > 0) {
        rep.unseen_psnr /= n_unseen;
        for (auto& v : rep.unseen_topk) v /= n_unseen;
    }
    return rep;
}

namespace {

std::array<double, 3> foreground_color(const Image& img, const Image& opacity, bool* any) {
    std::array<double, 3> acc = {0, 0, 0};
    int count = 0;
    for (size_t i = 0; i < img.pixels.size() / 3; ++i) {
        if (opacity.pixels[i * 3] > 0.5f) {
            for (int c = 0; c < 3; ++c) acc[static_cast<size_t>(c)] += img.pixels[i * 3 + static_cast<size_t>(c)];
            ++count;
        }
    }
    *any = count > 0;
    if (count == 0) {
        // fall back to the whole-image mean so the trace stays defined
        for (size_t i = 0; i < img.pixels.size(); ++i) acc[i % 3] += img.pixels[i];
        count = static_cast<int>(img.pixels.size() / 3);
    }
    for (auto& v : acc) v /= count;
    return acc;
}

double color_dist(const std::array<double, 3>& a, const std::array<double, 3>& b) {
    double s = 0;
    for (int c = 0; c < 3; ++c) s += (a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)]) * (a[static_cast<size_t>(c)] - b[static_cast<size_t>(c)]);
    return std::sqrt(s);
}

InterpTrace trace_from_frames(std::vector<InterpFrame> frames, const Image& plain_a,
                              const Image& plain_b) {
    InterpTrace tr;
    tr.frames = std::move(frames);
    for (size_t i = 1; i < tr.frames.size(); ++i)
        tr.total_variation += color_dist(tr.frames[i - 1].fg_color, tr.frames[i].fg_color);
    tr.endpoint_distance =
        color_dist(tr.frames.front().fg_color, tr.frames.back().fg_color);
    tr.endpoint_a_exact = tr.frames.front().image.pixels == plain_a.pixels;
    tr.endpoint_b_exact = tr.frames.back().image.pixels == plain_b.pixels;
    return tr;
}

}  // namespace

bool EvalReport::collapsed() const {
    for (size_t i = 0; i < rows.size(); ++i)
        for (size_t j = i + 1; j < rows.size(); ++j)
            if (rows[i].nearest_prompt == rows[j].nearest_prompt) return true;
    return false;
}

bool EvalReport::confusion_is_identity() const {
    for (const auto& row : rows)
        if (row.nearest_prompt != row.prompt_index) return false;
    return true;
}

std::string EvalReport::to_text() const {
    std::ostringstream os;
    os << "model evaluation (" << poses << " poses per prompt)\n";
    os << "config_hash " << std::hex << config_hash << std::dec << "\n\n";
    os << "per-prompt results (psnr dB vs oracle, nearest oracle, top-k pose hits):\n";
    for (const auto& row : rows) {
        os << "  " << (row.holdout ? "[unseen] " : "[seen]   ") << row.prompt << "  psnr "
           << row.psnr << "  nearest '" << rows[static_cast<size_t>(row.nearest_prompt)].prompt
           << "'  hits";
        for (size_t ki = 0; ki < k_list.size(); ++ki)
            os << " top" << k_list[ki] << "=" << row.topk_hits[ki] << "/" << poses;
        os << "\n";
    }
    os << "\nseen mean psnr " << seen_psnr << " dB over " << std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.holdout; })
       << " prompts\n";
    os << "unseen mean psnr " << unseen_psnr << " dB over " << std::count_if(rows.begin(), rows.end(), [](const auto& r) { return r.holdout; })
       << " prompts\n";
    os << "retrieval accuracy:\n";
    for (size_t ki = 0; ki < k_list.size(); ++ki) {
        os << "  top-" << k_list[ki] << ": seen " << seen_topk[ki];
        if (std::any_of(rows.begin(), rows.end(), [](const auto& r) { return r.holdout; }))
            os << ", unseen " << unseen_topk[ki];
        os << "\n";
    }
    os << "confusion " << (confusion_is_identity() ? "identity" : "NOT identity")
       << (collapsed() ? " (collapse detected)" : "") << "\n";
    return os.str();
}

void EvalReport::save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot write report: " + path);
    f << to_text();
}

EvalReport evaluate_model(const Hypernet<float>& model, const DatasetManifest& manifest,
                          const EvalOptions& opts, uint64_t config_hash) {
    const int n_poses = std::min(opts.poses, static_cast<int>(manifest.poses.size()));
    std::vector<std::vector<Image>> renders(manifest.prompts.size());
    for (size_t p = 0; p < manifest.prompts.size(); ++p) {
        const auto& spec = manifest.prompts[p].spec;
        for (int k = 0; k < n_poses; ++k)
            renders[p].push_back(render_model_image(model, spec, manifest, k, opts.mode,
                                                    manifest.render.samples_eval));
    }
    return score_render_set(manifest, renders, opts, config_hash);
}

EvalReport retrieval_eval(const Hypernet<float>& model, const DatasetManifest& manifest,
                          const EvalOptions& opts, uint64_t config_hash) {
    return evaluate_model(model, manifest, opts, config_hash);
}

EvalReport oracle_control_report(const DatasetManifest& manifest, const EvalOptions& opts) {
    const int n_poses = std::min(opts.poses, static_cast<int>(manifest.poses.size()));
    std::vector<std::vector<Image>> renders(manifest.prompts.size());
    for (size_t p = 0; p < manifest.prompts.size(); ++p)
        for (int k = 0; k < n_poses; ++k)
            renders[p].push_back(oracle_render(
                manifest.oracle(static_cast<int>(p)), manifest.camera(k),
                manifest.render.samples_eval, manifest.render.t_near, manifest.render.t_far,
                manifest.render.background));
    return score_render_set(manifest, renders, opts, 0);
}

Image contact_sheet(const Hypernet<float>& model, const DatasetManifest& manifest, int pose_index,
                    ConditioningMode mode, int samples) {
    const auto shapes = manifest.vocab_shapes();
    const auto attrs = manifest.vocab_attributes();
    const int w = manifest.render.width, h = manifest.render.height;
    Image sheet(static_cast<int>(attrs.size()) * w, static_cast<int>(shapes.size()) * h);
    for (size_t si = 0; si < shapes.size(); ++si)
        for (size_t ai = 0; ai < attrs.size(); ++ai) {
            SceneSpec spec{*parse_shape(shapes[si]), *parse_attribute(attrs[ai])};
            if (manifest.index_of_prompt(spec) < 0) continue;
            Image tile = render_model_image(model, spec, manifest, pose_index, mode, samples);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    for (int c = 0; c < 3; ++c)
                        sheet.px(static_cast<int>(ai) * w + x, static_cast<int>(si) * h + y)[c] =
                            tile.px(x, y)[c];
        }
    return sheet;
}

InterpTrace interpolate_ct(const Hypernet<float>& model, const SceneSpec& a, const SceneSpec& b,
                           const std::vector<double>& deltas, const DatasetManifest& manifest,
                           int pose_index, ConditioningMode mode, int samples) {
    auto ct_a = model.conditioning_token(attribute_name(a.attribute), shape_name(a.shape));
    auto ct_b = model.conditioning_token(attribute_name(b.attribute), shape_name(b.shape));

    std::vector<InterpFrame> frames;
    for (double d : deltas) {
        Tensor<float> ct;
        if (d == 0.0) {
            ct = ct_a;
        } else if (d == 1.0) {
            ct = ct_b;
        } else {
            ct = add(scale(ct_a, static_cast<float>(1.0 - d)), scale(ct_b, static_cast<float>(d)));
        }
        InterpFrame fr;
        fr.delta = d;
        Image opacity;
        fr.image =
            render_model_image_with_ct(model, ct, manifest, pose_index, mode, samples, &opacity);
        fr.fg_color = foreground_color(fr.image, opacity, &fr.has_foreground);
        frames.push_back(std::move(fr));
    }
    Image plain_a = render_model_image(model, a, manifest, pose_index, mode, samples);
    Image plain_b = render_model_image(model, b, manifest, pose_index, mode, samples);
    return trace_from_frames(std::move(frames), plain_a, plain_b);
}

InterpTrace interpolate_weights(const Hypernet<float>& model, const SceneSpec& a,
                                const SceneSpec& b, const std::vector<double>& deltas,
                                const DatasetManifest& manifest, int pose_index,
                                ConditioningMode mode, int samples) {
    const auto& r = manifest.render;
    RayBatch rays = make_rays(manifest.camera(pose_index), r.t_near, r.t_far);
    const auto ts = sample_depths(rays.count(), samples, r.t_near, r.t_far, false, nullptr);
    const auto deltas_seg = segment_deltas(ts, rays.count(), samples, r.t_far);
    auto pts = ray_points<float>(rays, ts, samples);

    auto fwd_a = model.forward(attribute_name(a.attribute), shape_name(a.shape), pts, mode, false);
    auto fwd_b = model.forward(attribute_name(b.attribute), shape_name(b.shape), pts, mode, false);

    auto render_weights = [&](const GeneratedWeights<float>& w) {
        auto res = nerf_forward(pts, w, model.enc, model.arch);
        auto comp = composite(res.density, res.rgb, deltas_seg, rays.count(), samples,
                              r.background);
        Image img(r.width, r.height);
        img.pixels.assign(comp.pixels.data(), comp.pixels.data() + comp.pixels.numel());
        Image opacity(r.width, r.height);
        for (int i = 0; i < rays.count(); ++i)
            for (int c = 0; c < 3; ++c)
                opacity.pixels[static_cast<size_t>(i) * 3 + c] = comp.opacity.at(i);
        return std::pair<Image, Image>(std::move(img), std::move(opacity));
    };

    std::vector<InterpFrame> frames;
    for (double d : deltas) {
        GeneratedWeights<float> w;
        for (size_t l = 0; l < fwd_a.weights.size(); ++l) {
            if (d == 0.0) {
                w.push_back(fwd_a.weights[l]);
            } else if (d == 1.0) {
                w.push_back(fwd_b.weights[l]);
            } else {
                w.push_back(add(scale(fwd_a.weights[l], static_cast<float>(1.0 - d)),
                                scale(fwd_b.weights[l], static_cast<float>(d))));
            }
        }
        InterpFrame fr;
        fr.delta = d;
        auto [img, opacity] = render_weights(w);
        fr.image = std::move(img);
        fr.fg_color = foreground_color(fr.image, opacity, &fr.has_foreground);
        frames.push_back(std::move(fr));
    }
    auto [plain_a, oa] = render_weights(fwd_a.weights);
    auto [plain_b, ob] = render_weights(fwd_b.weights);
    return trace_from_frames(std::move(frames), plain_a, plain_b);
}

std::string InterpTrace::to_text() const {
    std::ostringstream os;
    os << "interpolation trace (" << frames.size() << " frames)\n";
    for (const auto& fr : frames)
        os << "  delta " << fr.delta << "  fg_color (" << fr.fg_color[0] << ", " << fr.fg_color[1]
           << ", " << fr.fg_color[2] << ")" << (fr.has_foreground ? "" : " [no fg pixels]")
           << "\n";
    os << "total_variation " << total_variation << "\n";
    os << "endpoint_distance " << endpoint_distance << "\n";
    os << "tv_ratio " << (endpoint_distance > 0 ? total_variation / endpoint_distance : 0.0)
       << "\n";
    os << "endpoints_exact " << (endpoint_a_exact ? "a=yes" : "a=NO") << " "
       << (endpoint_b_exact ? "b=yes" : "b=NO") << "\n";
    return os.str();
}

AblationSeedResult run_ablation_pair(const Config& base_cfg, const DatasetManifest& manifest,
                                     uint64_t seed, const EvalOptions& opts) {
    AblationSeedResult out;
    out.seed = seed;
    for (auto mode : {ConditioningMode::Dynamic, ConditioningMode::Static}) {
        Config cfg = base_cfg;
        cfg.seed = seed;
        cfg.train.mode = mode_name(mode);
        Distiller d(cfg, manifest, mode);
        for (int s = 0; s < cfg.train.steps; ++s) d.step();
        EvalOptions eopts = opts;
        eopts.mode = mode;
        EvalReport rep = evaluate_model(d.model(), manifest, eopts, cfg.hash());
        AblationArm arm;
        arm.mode = mode;
        arm.mean_psnr = rep.seen_psnr;
        for (const auto& row : rep.rows) arm.per_scene_psnr.push_back(row.psnr);
        arm.collapsed = rep.collapsed();
        arm.confusion_identity = rep.confusion_is_identity();
        (mode == ConditioningMode::Dynamic ? out.dynamic_arm : out.static_arm) = arm;
    }
    return out;
}

std::string AblationReport::to_text() const {
    std::ostringstream os;
    os << "dynamic-vs-static ablation over " << seeds.size() << " seeds\n";
    int dyn_wins = 0, static_fails = 0;
    for (const auto& s : seeds) {
        os << "  seed " << s.seed << ": dynamic psnr " << s.dynamic_arm.mean_psnr << " dB"
           << (s.dynamic_arm.confusion_identity ? " (identity)" : " (confused)")
           << " | static psnr " << s.static_arm.mean_psnr << " dB"
           << (s.static_arm.collapsed ? " (collapsed)" : "") << "\n";
        if (s.dynamic_arm.mean_psnr > s.static_arm.mean_psnr) ++dyn_wins;
        if (s.static_arm.collapsed ||
            s.dynamic_arm.mean_psnr - s.static_arm.mean_psnr >= 2.0)
            ++static_fails;
    }
    os << "dynamic higher psnr in " << dyn_wins << "/" << seeds.size() << " seeds\n";
    os << "static collapse-or-2dB-gap in " << static_fails << "/" << seeds.size() << " seeds\n";
    return os.str();
}

}  // namespace hf
