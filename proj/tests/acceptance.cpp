// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Criteria 1-4 always run in full. Criteria 5-8 involve training
// runs: by default they run at reduced step budgets against thresholds
// pre-registered from the committed pilot runs (see pilot/); setting
// HF_ACCEPT_FULL=1 re-runs them at the full pilot budgets and the full
// thresholds.

#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gradcheck.hpp"
#include "hf/eval.hpp"

namespace fs = std::filesystem;
using hf::Tensor;
using F32 = Tensor<float>;
using F64 = Tensor<double>;

namespace {

struct CriterionResult {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

struct Budgets {
    bool full = false;
    // criterion 5 (packing)
    int pack_steps = 800;
    double pack_psnr_db = 15.0;
    // criterion 6 (zero-shot holdout)
    int holdout_steps = 800;
    double holdout_gap_db = 4.0;
    double unseen_top1 = 0.50;
    // criterion 7 (ablation)
    int conflict_steps = 350;
    double conflict_gap_db = 1.0;
    // criterion 8 (interpolation)
    double tv_ratio = 2.0;

    static Budgets detect() {
        Budgets b;
        const char* e = std::getenv("HF_ACCEPT_FULL");
        b.full = e != nullptr && e[0] == '1';
        if (b.full) {
            b.pack_steps = -1;     // as committed in the pilot config
            b.pack_psnr_db = 22.0;
            b.holdout_steps = -1;
            b.holdout_gap_db = 3.0;
            b.unseen_top1 = 0.75;
            b.conflict_steps = -1;
            b.conflict_gap_db = 2.0;
            b.tv_ratio = 1.5;
        }
        return b;
    }
};

std::string config_path(const std::string& name) {
    return std::string(HF_CONFIG_DIR) + "/" + name;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("hf_accept_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string sub(const std::string& name) const {
        fs::create_directories(path / name);
        return (path / name).string();
    }
};

// ---------------------------------------------------------------------------
// criterion 1: autodiff soundness

struct OpCheck {
    std::string name;
    double worst = 0;
    size_t cases = 0;
};

template <typename BuildFn>
void run_op_cases(std::vector<OpCheck>& out, const std::string& name, int n_cases,
                  uint64_t seed_base, BuildFn make_case) {
    OpCheck chk{name};
    for (int c = 0; c < n_cases; ++c) {
        auto rep = make_case(seed_base + static_cast<uint64_t>(c));
        chk.worst = std::max(chk.worst, rep.max_rel_err);
        chk.cases += 1;
    }
    out.push_back(chk);
}

CriterionResult criterion1() {
    const auto t0 = std::chrono::steady_clock::now();
    std::vector<OpCheck> checks;
    constexpr int kCases = 100;

    auto rnd_shape = [](hf::Pcg32& rng) {
        return std::vector<int>{1 + static_cast<int>(rng.next_below(5)),
                                1 + static_cast<int>(rng.next_below(7))};
    };

    // elementwise binaries, including the broadcast forms
    struct Bin {
        const char* name;
        F64 (*f)(const F64&, const F64&);
    };
    auto mk_div_safe = [](F64& t) {
        for (auto& v : t.vec())
            if (std::fabs(v) < 0.2) v += v < 0 ? -0.3 : 0.3;
    };
    const std::vector<Bin> bins = {{"add", hf::add<double>},
                                   {"sub", hf::sub<double>},
                                   {"mul", hf::mul<double>},
                                   {"div", hf::div<double>}};
    for (const auto& bin : bins) {
        run_op_cases(checks, bin.name, kCases, 100, [&](uint64_t seed) {
            hf::Pcg32 rng(seed);
            auto shape = rnd_shape(rng);
            auto a = hftest::random_tensor(shape, rng);
            const int form = static_cast<int>(rng.next_below(3));
            F64 b = form == 0   ? hftest::random_tensor(shape, rng)
                    : form == 1 ? hftest::random_tensor({1, shape[1]}, rng)
                                : hftest::random_tensor({1, 1}, rng);
            if (bin.f == hf::div<double>) mk_div_safe(b);
            return hftest::gradcheck({a, b}, [&]() {
                auto y = bin.f(a, b);
                return hf::reduce_mean_all(hf::mul(y, y));
            }, 6, seed);
        });
    }

    struct Un {
        const char* name;
        std::function<F64(const F64&)> f;
        double lo, hi;
    };
    const std::vector<Un> uns = {
        {"relu", [](const F64& t) { return hf::relu(t); }, -2, 2},
        {"exp", [](const F64& t) { return hf::exp_(t); }, -2, 2},
        {"sigmoid", [](const F64& t) { return hf::sigmoid(t); }, -4, 4},
        {"softplus", [](const F64& t) { return hf::softplus(t); }, -4, 4},
        {"sin", [](const F64& t) { return hf::sin_(t); }, -3, 3},
        {"cos", [](const F64& t) { return hf::cos_(t); }, -3, 3},
        {"sqrt", [](const F64& t) { return hf::sqrt_(t); }, 0.2, 4},
        {"scale", [](const F64& t) { return hf::scale(t, -1.7); }, -2, 2},
        {"add_scalar", [](const F64& t) { return hf::add_scalar(t, 0.37); }, -2, 2},
        {"softmax", [](const F64& t) { return hf::softmax(t, 1); }, -3, 3},
    };
    for (const auto& un : uns) {
        run_op_cases(checks, un.name, kCases, 200, [&](uint64_t seed) {
            hf::Pcg32 rng(seed);
            auto x = F64::uniform(rnd_shape(rng), un.lo, un.hi, rng);
            if (std::string(un.name) == "relu")
                for (auto& v : x.vec())
                    if (std::fabs(v) < 1e-3) v += 0.01;
            hf::Pcg32 rng2(seed + 17);
            auto w = hftest::random_tensor({x.dim(1), 2}, rng2);
            return hftest::gradcheck({x}, [&]() {
                auto y = un.f(x);
                auto z = hf::matmul(y, w);
                return hf::reduce_mean_all(hf::mul(z, z));
            }, 6, seed);
        });
    }

    run_op_cases(checks, "matmul", kCases, 300, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        const int m = 1 + static_cast<int>(rng.next_below(5));
        const int k = 1 + static_cast<int>(rng.next_below(6));
        const int n = 1 + static_cast<int>(rng.next_below(5));
        auto a = hftest::random_tensor({m, k}, rng);
        auto b = hftest::random_tensor({k, n}, rng);
        return hftest::gradcheck({a, b}, [&]() {
            auto y = hf::matmul(a, b);
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 6, seed);
    });

    run_op_cases(checks, "transpose+reshape", kCases, 400, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        auto shape = rnd_shape(rng);
        auto a = hftest::random_tensor(shape, rng);
        return hftest::gradcheck({a}, [&]() {
            auto y = hf::transpose(hf::reshape(a, {shape[1], shape[0]}));
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 6, seed);
    });

    run_op_cases(checks, "reduce_mean", kCases, 500, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        auto a = hftest::random_tensor(rnd_shape(rng), rng);
        const int axis = static_cast<int>(rng.next_below(2));
        return hftest::gradcheck({a}, [&]() {
            auto y = hf::reduce_mean(a, axis);
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 6, seed);
    });

    run_op_cases(checks, "concat+slice", kCases, 600, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        const int n = 1 + static_cast<int>(rng.next_below(4));
        auto a = hftest::random_tensor({n, 1 + static_cast<int>(rng.next_below(4))}, rng);
        auto b = hftest::random_tensor({n, 1 + static_cast<int>(rng.next_below(4))}, rng);
        return hftest::gradcheck({a, b}, [&]() {
            auto y = hf::concat<double>({a, b}, 1);
            auto s = hf::slice_cols(y, 0, y.dim(1) > 1 ? y.dim(1) - 1 : 1);
            return hf::reduce_mean_all(hf::mul(s, s));
        }, 6, seed);
    });

    run_op_cases(checks, "take_rows", kCases, 700, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        const int rows = 2 + static_cast<int>(rng.next_below(5));
        auto table = hftest::random_tensor({rows, 3}, rng);
        std::vector<int> idx;
        for (int i = 0; i < 4; ++i)
            idx.push_back(static_cast<int>(rng.next_below(static_cast<uint32_t>(rows))));
        return hftest::gradcheck({table}, [&]() {
            auto y = hf::take_rows(table, idx);
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 6, seed);
    });

    run_op_cases(checks, "layer_norm", kCases, 800, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        const int n = 1 + static_cast<int>(rng.next_below(4));
        const int d = 2 + static_cast<int>(rng.next_below(6));
        auto x = hftest::random_tensor({n, d}, rng);
        auto g = hftest::random_tensor({d}, rng);
        auto b = hftest::random_tensor({d}, rng);
        return hftest::gradcheck({x, g, b}, [&]() {
            auto y = hf::layer_norm(x, g, b);
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 6, seed);
    });

    run_op_cases(checks, "volume_composite", kCases, 900, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        const int rays = 1 + static_cast<int>(rng.next_below(3));
        const int S = 3 + static_cast<int>(rng.next_below(6));
        auto ts = hf::sample_depths(rays, S, 2, 6, true, &rng);
        auto deltas = hf::segment_deltas(ts, rays, S, 6);
        auto sigma = F64::uniform({rays * S}, 0.05, 2.5, rng);
        auto rgb = F64::uniform({rays * S, 3}, 0.1, 0.9, rng);
        auto target = F64::uniform({rays, 3}, 0, 1, rng);
        return hftest::gradcheck({sigma, rgb}, [&]() {
            auto res = hf::composite(sigma, rgb, deltas, rays, S, {1.0, 1.0, 1.0});
            return hf::add(hf::mse(res.pixels, target),
                           hf::reduce_mean_all(res.opacity));
        }, 6, seed);
    });

    run_op_cases(checks, "hash_encode", kCases, 1000, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        hf::HashGrid<double> grid;
        grid.cfg.levels = 2;
        grid.cfg.log2_table_size = 6;
        grid.init(rng);
        for (auto& v : grid.tables.vec()) v = rng.uniform(-0.5, 0.5);
        auto pts = F64::uniform({3, 3}, 0.0, 1.0, rng);
        return hftest::gradcheck({grid.tables}, [&]() {
            auto y = hf::hash_encode(grid, pts);
            return hf::reduce_mean_all(hf::mul(y, y));
        }, 10, seed);
    });

    // stop-gradient semantics: g(x) = f(x, sg(h(x))) matches the graph where
    // h(x) is a detached constant
    run_op_cases(checks, "stop_gradient", kCases, 1100, [&](uint64_t seed) {
        hf::Pcg32 rng(seed);
        auto x = hftest::random_tensor({3, 4}, rng);
        auto m = hftest::random_tensor({4, 4}, rng);
        auto frozen = hf::relu(hf::matmul(x, m)).clone_detached();
        return hftest::gradcheck2(
            {x},
            [&]() {  // live graph with the stop gradient
                auto h = hf::stop_gradient(hf::relu(hf::matmul(x, m)));
                return hf::reduce_mean_all(hf::mul(hf::matmul(x, m), h));
            },
            [&]() {  // fd graph against the captured constant
                return hf::reduce_mean_all(hf::mul(hf::matmul(x, m), frozen));
            },
            6, seed);
    });

    // the full composite: hypernet -> NeRF -> volume render -> loss
    {
        OpCheck chk{"hypernet_composite"};
        for (int c = 0; c < 12; ++c) {
            hf::PromptVocab vocab;
            vocab.attributes = {"red", "green"};
            vocab.shapes = {"sphere", "box"};
            hf::HypernetConfig hcfg;
            hcfg.token_dim = 8;
            hcfg.tx.num_blocks = 2;
            hcfg.tx.num_heads = 2;
            hcfg.tx.head_dim = 4;
            hcfg.tx.mlp_ratio = 2;
            hcfg.gen_hidden = 12;
            hf::NerfArchitecture arch;
            arch.hidden_dim = 8;
            hf::SinusoidalConfig sc;
            sc.num_frequencies = 2;
            hf::HashGridConfig hc;
            hc.levels = 2;
            hc.log2_table_size = 6;
            auto model = hf::Hypernet<double>::build(vocab, hcfg, arch, sc, hc, true, true, 2.0,
                                                     7000 + static_cast<uint64_t>(c));
            hf::Pcg32 rng(7100 + static_cast<uint64_t>(c));
            for (auto& v : model.enc.grid.tables.vec()) v = rng.uniform(-0.3, 0.3);

            const int rays = 2, S = 4;
            auto cam_rays = hf::make_rays(
                hf::CameraPose{{4, 0, 0}, {0, 0, 0}, {0, 0, 1}, 0.5, 1, 2}, 2, 6);
            auto ts = hf::sample_depths(rays, S, 2, 6, true, &rng);
            auto deltas = hf::segment_deltas(ts, rays, S, 6);
            auto pts = hf::ray_points<double>(cam_rays, ts, S);
            auto target = F64::uniform({rays, 3}, 0, 1, rng);

            auto base = model.forward("red", "sphere", pts, hf::ConditioningMode::Dynamic);
            auto frozen = hf::Hypernet<double>::frozen_inputs_of(base);
            auto loss_of = [&](const std::vector<F64>* fz) {
                auto res = model.forward("red", "sphere", pts, hf::ConditioningMode::Dynamic,
                                         true, fz);
                auto comp = hf::composite(res.density, res.rgb, deltas, rays, S, {1.0, 1.0, 1.0});
                return hf::mse(comp.pixels, target);
            };
            std::vector<F64> leaves = {model.embed,
                                       model.blocks[0].wq,
                                       model.blocks[1].ff2_w,
                                       model.gens[0].mlp1_w,
                                       model.gens[2].adain_w,
                                       model.gens[5].mlp2_w,
                                       model.enc.grid.tables};
            auto rep = hftest::gradcheck2(
                leaves, [&]() { return loss_of(nullptr); }, [&]() { return loss_of(&frozen); }, 4,
                static_cast<uint64_t>(c));
            chk.worst = std::max(chk.worst, rep.max_rel_err);
            chk.cases += 1;
        }
        checks.push_back(chk);
    }

    double worst = 0;
    std::string worst_op;
    size_t total_cases = 0;
    for (const auto& chk : checks) {
        total_cases += chk.cases;
        if (chk.worst > worst) {
            worst = chk.worst;
            worst_op = chk.name;
        }
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::ostringstream os;
    os << checks.size() << " ops, " << total_cases << " cases, worst rel err " << worst << " ("
       << worst_op << "), " << secs << " s";
    return {1, "autodiff soundness (64-bit central differences, tol 1e-4)", worst < 1e-4 && secs < 120.0,
            os.str()};
}

// ---------------------------------------------------------------------------
// criterion 2: minibatch-collapse identity at full architecture size

CriterionResult criterion2() {
    hf::PromptVocab vocab;
    vocab.attributes = {"red", "green", "blue", "yellow"};
    vocab.shapes = {"sphere", "box", "torus", "cylinder"};
    auto model = hf::Hypernet<float>::build(vocab, hf::HypernetConfig{}, hf::NerfArchitecture{},
                                            hf::SinusoidalConfig{}, hf::HashGridConfig{}, true,
                                            true, 2.0, 77);
    auto single = F32::from({0.31f, -0.22f, 0.87f}, {1, 3});
    auto w1 = model.forward("red", "sphere", single, hf::ConditioningMode::Dynamic).weights;

    double worst = 0;
    for (int n : {2, 8, 64}) {
        F32 dup({n, 3});
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < 3; ++j) dup.at(i, j) = single.at(0, j);
        auto wn = model.forward("red", "sphere", dup, hf::ConditioningMode::Dynamic).weights;
        for (size_t l = 0; l < w1.size(); ++l) {
            double mat_scale = 1e-6;
            for (size_t i = 0; i < w1[l].numel(); ++i)
                mat_scale = std::max(mat_scale, std::fabs(static_cast<double>(w1[l].data()[i])));
            for (size_t i = 0; i < w1[l].numel(); ++i)
                worst = std::max(worst, std::fabs(static_cast<double>(wn[l].data()[i]) -
                                                  w1[l].data()[i]) /
                                            mat_scale);
        }
    }
    std::ostringstream os;
    os << "n in {2,8,64} vs n=1, worst rel deviation " << worst
       << " (normalized per weight matrix)";
    return {2, "minibatch-collapse identity (tol 1e-6)", worst <= 1e-6, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 3: stop-gradient barrier + full coverage

CriterionResult criterion3() {
    // exact-zero activation gradient through the weight-generation path
    hf::PromptVocab vocab;
    vocab.attributes = {"red"};
    vocab.shapes = {"sphere"};
    hf::HypernetConfig hcfg;
    hcfg.token_dim = 16;
    hcfg.tx.num_blocks = 2;
    hcfg.tx.num_heads = 4;
    hcfg.tx.head_dim = 8;
    hcfg.gen_hidden = 32;
    hf::NerfArchitecture arch;
    arch.hidden_dim = 16;
    hf::HashGridConfig hc;
    hc.log2_table_size = 8;
    hc.levels = 3;
    auto model = hf::Hypernet<float>::build(vocab, hcfg, arch, hf::SinusoidalConfig{}, hc, true,
                                            true, 2.0, 5);
    hf::Pcg32 rng(6);
    auto acts = F32::uniform({12, 16}, -1, 1, rng).set_requires_grad(true);
    bool exact_zero = true;
    {
        hf::Tape<float> tape;
        hf::TapeScope<float> scope(tape);
        auto ct = model.conditioning_token("red", "sphere");
        auto w = model.generate_layer(3, ct, acts, hf::ConditioningMode::Dynamic);
        auto loss = hf::reduce_mean_all(hf::mul(w, w));
        tape.backward(loss);
        if (acts.has_grad())
            for (float g : acts.grad()) exact_zero = exact_zero && g == 0.0f;
    }

    // one full training step reaches every trainable group
    hf::Config cfg;
    cfg.dataset.shapes = {"sphere", "box"};
    cfg.dataset.attributes = {"red", "green"};
    cfg.dataset.holdout = 0;
    cfg.dataset.poses_per_scene = 3;
    cfg.render.width = cfg.render.height = 16;
    cfg.render.samples_train = 8;
    cfg.rays_per_image = 64;
    cfg.encoding.hash.log2_table_size = 10;
    cfg.hypernet.blocks = 2;
    cfg.hypernet.heads = 4;
    cfg.hypernet.head_dim = 8;
    cfg.hypernet.generator_hidden = 32;
    cfg.nerf.hidden_dim = 16;
    auto manifest = hf::manifest_from_config(cfg);
    hf::Distiller d(cfg, manifest, hf::ConditioningMode::Dynamic);
    d.step();
    auto cover = d.last_step_group_coverage();
    const bool covered = cover.at("embed") && cover.at("tx") && cover.at("gen") &&
                         cover.at("hash");

    std::ostringstream os;
    os << "activation grad through generator path " << (exact_zero ? "exactly zero" : "NONZERO")
       << "; step-1 coverage embed/tx/gen/hash " << cover.at("embed") << cover.at("tx")
       << cover.at("gen") << cover.at("hash");
    return {3, "stop-gradient barrier + parameter-group coverage", exact_zero && covered,
            os.str()};
}

// ---------------------------------------------------------------------------
// criterion 4: renderer conservation + slab closed form

CriterionResult criterion4() {
    hf::Pcg32 rng(11);
    double worst = 0;
    int rays_checked = 0;
    while (rays_checked < 10000) {
        const int rays = 64, S = 3 + static_cast<int>(rng.next_below(30));
        auto ts = hf::sample_depths(rays, S, 2, 6, true, &rng);
        auto deltas = hf::segment_deltas(ts, rays, S, 6);
        auto sigma = F32::uniform({rays * S}, 0.f, 12.f, rng);
        auto ones = F32::full({rays * S, 3}, 1.f);
        auto res = hf::composite(sigma, ones, deltas, rays, S, {1.f, 1.f, 1.f});
        for (int r = 0; r < rays; ++r)
            for (int c = 0; c < 3; ++c)
                worst = std::max(worst, std::fabs(static_cast<double>(res.pixels.at(r, c)) - 1.0));
        rays_checked += rays;
    }

    const int S = 128;
    auto ts = hf::sample_depths(1, S, 0, 4, false, nullptr);
    auto deltas = hf::segment_deltas(ts, 1, S, 4);
    F32 sigma({S});
    const double sig = 1.3, lo = 1.0, hi = 3.0;
    for (int j = 0; j < S; ++j)
        sigma.at(j) = (ts[static_cast<size_t>(j)] >= lo && ts[static_cast<size_t>(j)] < hi)
                          ? static_cast<float>(sig)
                          : 0.f;
    auto res = hf::composite(sigma, F32::full({S, 3}, 1.f), deltas, 1, S, {0.f, 0.f, 0.f});
    const double expect = 1.0 - std::exp(-sig * (hi - lo));
    const double slab_err = std::fabs(res.opacity.at(0) - expect) / expect;

    std::ostringstream os;
    os << rays_checked << " random rays, worst conservation residual " << worst
       << "; uniform-slab opacity error " << slab_err * 100 << "% at S=128";
    return {4, "renderer conservation (1e-5) + slab closed form (2%)",
            worst < 1e-5 && slab_err < 0.02, os.str()};
}

// ---------------------------------------------------------------------------
// criteria 5-8 share trained models

hf::Config load_pilot(const std::string& name, int step_override) {
    auto cfg = hf::Config::load(config_path(name));
    if (step_override > 0) cfg.train.steps = step_override;
    return cfg;
}

CriterionResult criterion5(const Budgets& b, TempDir& tmp) {
    auto cfg = load_pilot("pilot_pack.json", b.pack_steps);
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    auto manifest = hf::manifest_from_config(cfg);
    hf::Distiller d(cfg, manifest, hf::ConditioningMode::Dynamic);
    const auto t0 = std::chrono::steady_clock::now();
    for (int s = 0; s < cfg.train.steps; ++s) d.step();
    const double train_secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    d.save(tmp.sub("pack") + "/last.ckpt");

    hf::EvalOptions opts;
    opts.poses = cfg.eval.poses;
    opts.k_list = {1};
    auto rep = hf::evaluate_model(d.model(), manifest, opts, cfg.hash());
    double min_psnr = 1e9, mean_psnr = 0;
    for (const auto& row : rep.rows) {
        min_psnr = std::min(min_psnr, row.psnr);
        mean_psnr += row.psnr;
    }
    mean_psnr /= static_cast<double>(rep.rows.size());
    const bool identity = rep.confusion_is_identity();

    // trained prompts must map to measurably different generated weights
    hf::Pcg32 rng(5);
    auto pts = F32::uniform({64, 3}, -1.f, 1.f, rng);
    auto wa = d.model().forward("red", "sphere", pts, hf::ConditioningMode::Dynamic, false);
    auto wb = d.model().forward("blue", "box", pts, hf::ConditioningMode::Dynamic, false);
    double wdiff = 0;
    for (size_t l = 0; l < wa.weights.size(); ++l)
        for (size_t i = 0; i < wa.weights[l].numel(); ++i)
            wdiff = std::max(wdiff, std::fabs(static_cast<double>(wa.weights[l].data()[i]) -
                                              wb.weights[l].data()[i]));

    std::ostringstream os;
    os << rep.rows.size() << " scenes, " << cfg.train.steps << " steps in " << train_secs
       << " s; per-scene psnr min " << min_psnr << " / mean " << mean_psnr << " dB (threshold "
       << b.pack_psnr_db << "); confusion " << (identity ? "identity" : "NOT identity")
       << "; max cross-prompt weight gap " << wdiff;
    return {5, std::string("packing, 4x4 grid (") + (b.full ? "full pilot budget" : "CI budget") +
                   ")",
            min_psnr >= b.pack_psnr_db && identity && wdiff > 0.0, os.str()};
}

struct HoldoutRun {
    std::unique_ptr<hf::Distiller> distiller;
    hf::DatasetManifest manifest;
    hf::Config cfg;
};

HoldoutRun train_holdout(const Budgets& b) {
    HoldoutRun run;
    run.cfg = load_pilot("pilot_holdout.json", b.holdout_steps);
    run.cfg.train.eval_every = 0;
    run.cfg.train.checkpoint_every = 0;
    run.manifest = hf::manifest_from_config(run.cfg);
    run.distiller =
        std::make_unique<hf::Distiller>(run.cfg, run.manifest, hf::ConditioningMode::Dynamic);
    for (int s = 0; s < run.cfg.train.steps; ++s) run.distiller->step();
    return run;
}

CriterionResult criterion6(const Budgets& b, const HoldoutRun& run) {
    hf::EvalOptions opts;
    opts.poses = run.cfg.eval.poses;
    opts.k_list = {1};
    auto rep = hf::evaluate_model(run.distiller->model(), run.manifest, opts, run.cfg.hash());
    const double gap = run.cfg.train.steps > 0 ? rep.seen_psnr - rep.unseen_psnr : 99.0;
    std::ostringstream os;
    os << "seen " << rep.seen_psnr << " dB vs unseen " << rep.unseen_psnr << " dB (gap " << gap
       << ", allowed " << b.holdout_gap_db << "); unseen top-1 " << rep.unseen_topk[0]
       << " (needed " << b.unseen_top1 << ", chance 0.0625)";
    const bool pass = gap <= b.holdout_gap_db && rep.unseen_topk[0] >= b.unseen_top1;
    return {6, std::string("zero-shot holdout generalization (") +
                   (b.full ? "full pilot budget" : "CI budget") + ")",
            pass, os.str()};
}

CriterionResult criterion8(const Budgets& b, const HoldoutRun& run) {
    // four seen same-shape color pairs from the 4x4 grid with its diagonal
    // holdout
    const std::vector<std::pair<std::string, std::string>> pairs = {
        {"green sphere", "blue sphere"},
        {"red box", "blue box"},
        {"red torus", "green torus"},
        {"green cylinder", "blue cylinder"},
    };
    std::vector<double> deltas;
    for (int i = 0; i <= 10; ++i) deltas.push_back(i / 10.0);

    int smooth = 0;
    bool endpoints_ok = true;
    double worst_color_err = 0;
    std::ostringstream os;
    for (const auto& [pa, pb] : pairs) {
        auto tr = hf::interpolate_ct(run.distiller->model(), hf::parse_prompt(pa),
                                     hf::parse_prompt(pb), deltas, run.manifest, 0,
                                     hf::ConditioningMode::Dynamic,
                                     run.manifest.render.samples_eval);
        endpoints_ok = endpoints_ok && tr.endpoint_a_exact && tr.endpoint_b_exact;
        const double ratio =
            tr.endpoint_distance > 1e-9 ? tr.total_variation / tr.endpoint_distance : 99.0;
        if (ratio <= b.tv_ratio) ++smooth;
        // endpoint foreground colors should sit on the attribute colors
        const auto col_a = hf::attribute_rgb(hf::parse_prompt(pa).attribute);
        const auto col_b = hf::attribute_rgb(hf::parse_prompt(pb).attribute);
        for (int c = 0; c < 3; ++c) {
            worst_color_err = std::max(
                worst_color_err, std::fabs(tr.frames.front().fg_color[static_cast<size_t>(c)] -
                                           col_a[static_cast<size_t>(c)]));
            worst_color_err = std::max(
                worst_color_err, std::fabs(tr.frames.back().fg_color[static_cast<size_t>(c)] -
                                           col_b[static_cast<size_t>(c)]));
        }
        os << "[" << pa << " -> " << pb << " tv_ratio " << ratio << "] ";
    }
    const double color_tol = b.full ? 0.05 : 0.15;
    os << "endpoints " << (endpoints_ok ? "exact" : "NOT exact") << "; " << smooth
       << "/4 within " << b.tv_ratio << "x; worst endpoint color err " << worst_color_err
       << " (tol " << color_tol << ")";
    return {8, std::string("conditioning-token interpolation (") +
                   (b.full ? "full pilot budget" : "CI budget") + ")",
            endpoints_ok && smooth >= 3 && worst_color_err <= color_tol, os.str()};
}

CriterionResult criterion7(const Budgets& b) {
    auto cfg = load_pilot("pilot_conflict.json", b.conflict_steps);
    cfg.train.eval_every = 0;
    cfg.train.checkpoint_every = 0;
    auto manifest = hf::manifest_from_config(cfg);
    hf::EvalOptions opts;
    opts.poses = cfg.eval.poses;
    opts.k_list = {1};

    int hold = 0;
    std::ostringstream os;
    for (uint64_t seed : {1ull, 2ull, 3ull, 4ull, 5ull}) {
        auto res = hf::run_ablation_pair(cfg, manifest, seed, opts);
        const bool dynamic_better =
            res.dynamic_arm.mean_psnr > res.static_arm.mean_psnr &&
            res.dynamic_arm.confusion_identity;
        const bool static_worse =
            res.static_arm.collapsed ||
            (res.dynamic_arm.mean_psnr - res.static_arm.mean_psnr >= b.conflict_gap_db);
        if (dynamic_better && static_worse) ++hold;
        os << "[seed " << seed << ": dyn " << res.dynamic_arm.mean_psnr << " dB"
           << (res.dynamic_arm.confusion_identity ? "" : " (confused)") << " vs stat "
           << res.static_arm.mean_psnr << " dB" << (res.static_arm.collapsed ? " collapsed" : "")
           << "] ";
    }
    os << hold << "/5 seeds hold the ordering (gap threshold " << b.conflict_gap_db << " dB)";
    return {7, std::string("dynamic-vs-static ablation (") +
                   (b.full ? "full pilot budget" : "CI budget") + ")",
            hold >= 4, os.str()};
}

// ---------------------------------------------------------------------------
// criterion 9: determinism & checkpointing

CriterionResult criterion9(TempDir& tmp) {
    const int saved_threads = hf::num_threads();
    hf::set_num_threads(1);  // deterministic mode

    hf::Config cfg;
    cfg.dataset.shapes = {"sphere", "box"};
    cfg.dataset.attributes = {"red", "green"};
    cfg.dataset.holdout = 0;
    cfg.dataset.poses_per_scene = 3;
    cfg.render.width = cfg.render.height = 16;
    cfg.render.samples_train = 8;
    cfg.rays_per_image = 64;
    cfg.encoding.hash.log2_table_size = 10;
    cfg.hypernet.blocks = 2;
    cfg.hypernet.heads = 4;
    cfg.hypernet.head_dim = 8;
    cfg.hypernet.generator_hidden = 32;
    cfg.nerf.hidden_dim = 16;
    cfg.train.steps = 14;
    cfg.train.eval_every = 7;
    cfg.train.checkpoint_every = 0;
    auto manifest = hf::manifest_from_config(cfg);

    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    };

    // equal seeds, equal bytes
    for (const char* name : {"da", "db"}) {
        hf::Distiller d(cfg, manifest, hf::ConditioningMode::Dynamic);
        d.run(tmp.sub(name));
    }
    const bool logs_equal =
        slurp(tmp.sub("da") + "/metrics.jsonl") == slurp(tmp.sub("db") + "/metrics.jsonl");
    const bool ckpts_equal =
        slurp(tmp.sub("da") + "/last.ckpt") == slurp(tmp.sub("db") + "/last.ckpt");

    // resume-at-k equals straight-through: interrupt after 7 of the 14 steps,
    // resume in a fresh instance under the same config
    {
        hf::Distiller d(cfg, manifest, hf::ConditioningMode::Dynamic);
        for (int s = 0; s < 7; ++s) d.step();
        d.save(tmp.sub("half") + "/last.ckpt");
    }
    {
        hf::Distiller d(cfg, manifest, hf::ConditioningMode::Dynamic);
        d.resume(tmp.sub("half") + "/last.ckpt");
        d.run(tmp.sub("resumed"));
    }
    const bool resume_equal =
        slurp(tmp.sub("resumed") + "/last.ckpt") == slurp(tmp.sub("da") + "/last.ckpt");
    // the resumed metrics log is exactly the tail of the straight-through log
    const std::string straight_log = slurp(tmp.sub("da") + "/metrics.jsonl");
    const std::string resumed_log = slurp(tmp.sub("resumed") + "/metrics.jsonl");
    const bool log_tail_equal =
        resumed_log.size() < straight_log.size() &&
        straight_log.compare(straight_log.size() - resumed_log.size(), resumed_log.size(),
                             resumed_log) == 0;

    hf::set_num_threads(saved_threads);
    std::ostringstream os;
    os << "logs " << (logs_equal ? "identical" : "DIFFER") << ", checkpoints "
       << (ckpts_equal ? "identical" : "DIFFER") << ", resume-at-7 "
       << (resume_equal && log_tail_equal ? "matches straight-through" : "DIVERGES");
    return {9, "determinism & checkpoint resume",
            logs_equal && ckpts_equal && resume_equal && log_tail_equal, os.str()};
}

}  // namespace

int main() {
    hf::tune_allocator();
    const Budgets budgets = Budgets::detect();
    std::printf("acceptance suite (%s mode)\n",
                budgets.full ? "FULL pilot-budget" : "CI reduced-budget");

    // HF_ACCEPT_ONLY=1,4,9 runs a subset
    auto wanted = [](int id) {
        const char* e = std::getenv("HF_ACCEPT_ONLY");
        if (!e) return true;
        std::stringstream ss(e);
        std::string tok;
        while (std::getline(ss, tok, ','))
            if (std::stoi(tok) == id) return true;
        return false;
    };

    TempDir tmp;
    std::vector<CriterionResult> results;
    if (wanted(1)) results.push_back(criterion1());
    if (wanted(2)) results.push_back(criterion2());
    if (wanted(3)) results.push_back(criterion3());
    if (wanted(4)) results.push_back(criterion4());
    if (wanted(5)) results.push_back(criterion5(budgets, tmp));
    if (wanted(6) || wanted(8)) {
        auto run = train_holdout(budgets);
        if (wanted(6)) results.push_back(criterion6(budgets, run));
        if (wanted(8)) results.push_back(criterion8(budgets, run));
    }
    if (wanted(7)) results.push_back(criterion7(budgets));
    if (wanted(9)) results.push_back(criterion9(tmp));

    std::sort(results.begin(), results.end(),
              [](const CriterionResult& a, const CriterionResult& b) { return a.id < b.id; });
    int failures = 0;
    for (const auto& r : results) {
        std::printf("[%s] criterion %d: %s\n        %s\n", r.pass ? "PASS" : "FAIL", r.id,
                    r.name.c_str(), r.detail.c_str());
        if (!r.pass) ++failures;
    }
    std::printf("%d/%zu criteria passed\n", static_cast<int>(results.size()) - failures,
                results.size());
    return failures == 0 ? 0 : 1;
}
