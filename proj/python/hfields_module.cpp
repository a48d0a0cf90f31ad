#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <filesystem>
#include <fstream>

#include "hf/eval.hpp"
#include "hf/png.hpp"

namespace py = pybind11;
namespace fs = std::filesystem;

namespace {

py::array_t<float> image_to_array(const hf::Image& img) {
    py::array_t<float> out({img.height, img.width, 3});
    std::copy(img.pixels.begin(), img.pixels.end(), out.mutable_data());
    return out;
}

py::array_t<float> tensor_to_array(const hf::Tensor<float>& t) {
    std::vector<py::ssize_t> shape;
    for (int d : t.shape()) shape.push_back(d);
    py::array_t<float> out(shape);
    std::copy(t.data(), t.data() + t.numel(), out.mutable_data());
    return out;
}

hf::Tensor<float> points_from_array(const py::array_t<float, py::array::c_style |
                                                                 py::array::forcecast>& pts) {
    if (pts.ndim() != 2 || pts.shape(1) != 3)
        throw std::invalid_argument("expected an (n, 3) float array of points");
    std::vector<float> data(pts.data(), pts.data() + pts.size());
    return hf::Tensor<float>::from(data, {static_cast<int>(pts.shape(0)), 3});
}

// Checkpoint + manifest + config bundle, the unit everything else works on.
struct PyModel {
    hf::Config cfg;
    hf::DatasetManifest manifest;
    hf::Hypernet<float> model;
    hf::ConditioningMode mode = hf::ConditioningMode::Dynamic;

    static PyModel load(const std::string& ckpt, const std::string& data_dir,
                        std::string config_path) {
        namespace fs = std::filesystem;
        if (config_path.empty())
            config_path = (fs::path(ckpt).parent_path() / "config.json").string();
        PyModel pm{hf::Config::load(config_path),
                   hf::DatasetManifest::load((fs::path(data_dir) / "manifest.json").string()),
                   {}};
        pm.model = hf::build_model(pm.cfg, pm.manifest);
        hf::load_checkpoint(ckpt, pm.model.params, nullptr, pm.cfg.hash());
        pm.mode = hf::parse_mode(pm.cfg.train.mode);
        return pm;
    }

    py::array_t<float> render(const std::string& prompt, int pose) const {
        const auto spec = hf::parse_prompt(prompt);
        return image_to_array(hf::render_model_image(model, spec, manifest, pose, mode,
                                                     manifest.render.samples_eval));
    }

    py::array_t<float> conditioning_token(const std::string& prompt) const {
        const auto spec = hf::parse_prompt(prompt);
        return tensor_to_array(model.conditioning_token(hf::attribute_name(spec.attribute),
                                                        hf::shape_name(spec.shape)));
    }

    py::list generated_weights(const std::string& prompt,
                               const py::array_t<float, py::array::c_style |
                                                             py::array::forcecast>& pts) const {
        const auto spec = hf::parse_prompt(prompt);
        auto fwd = model.forward(hf::attribute_name(spec.attribute), hf::shape_name(spec.shape),
                                 points_from_array(pts), mode, false);
        py::list out;
        for (const auto& w : fwd.weights) out.append(tensor_to_array(w));
        return out;
    }

    py::dict query(const std::string& prompt,
                   const py::array_t<float, py::array::c_style | py::array::forcecast>& pts)
        const {
        const auto spec = hf::parse_prompt(prompt);
        auto fwd = model.forward(hf::attribute_name(spec.attribute), hf::shape_name(spec.shape),
                                 points_from_array(pts), mode, false);
        py::dict out;
        out["density"] = tensor_to_array(fwd.density);
        out["rgb"] = tensor_to_array(fwd.rgb);
        return out;
    }

    py::dict evaluate(int poses) const {
        hf::EvalOptions opts;
        opts.poses = poses > 0 ? poses : cfg.eval.poses;
        opts.k_list = cfg.eval.k_list;
        opts.mode = mode;
        auto rep = hf::evaluate_model(model, manifest, opts, cfg.hash());
        py::dict out;
        out["seen_psnr"] = rep.seen_psnr;
        out["unseen_psnr"] = rep.unseen_psnr;
        out["seen_top1"] = rep.seen_topk.empty() ? 0.0 : rep.seen_topk[0];
        out["unseen_top1"] = rep.unseen_topk.empty() ? 0.0 : rep.unseen_topk[0];
        out["confusion_identity"] = rep.confusion_is_identity();
        py::dict per_prompt;
        for (const auto& row : rep.rows) per_prompt[row.prompt.c_str()] = row.psnr;
        out["psnr"] = per_prompt;
        return out;
    }

    std::vector<std::string> prompts() const {
        std::vector<std::string> out;
        for (const auto& p : manifest.prompts) out.push_back(p.spec.prompt());
        return out;
    }
};

}  // namespace

PYBIND11_MODULE(_hfields, m) {
    m.doc() = "prompt-conditioned NeRF hypernetwork distilled from procedural scene oracles";
    hf::tune_allocator();

    m.def("version", [] { return std::string(hf::kVersion); });
    m.def("set_num_threads", &hf::set_num_threads, py::arg("n"));

    m.def(
        "shape_names", [] { return hf::all_shape_names(); },
        "the nine procedural shapes");
    m.def(
        "attribute_names", [] { return hf::all_attribute_names(); },
        "the eight color attributes");

    m.def(
        "sdf",
        [](const std::string& shape,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& pts) {
            auto sk = hf::parse_shape(shape);
            if (!sk) throw hf::VocabError("unknown shape '" + shape + "'");
            if (pts.ndim() != 2 || pts.shape(1) != 3)
                throw std::invalid_argument("expected an (n, 3) array");
            py::array_t<double> out(pts.shape(0));
            for (py::ssize_t i = 0; i < pts.shape(0); ++i)
                out.mutable_data()[i] = hf::shape_sdf(
                    *sk, {pts.data()[i * 3 + 0], pts.data()[i * 3 + 1], pts.data()[i * 3 + 2]});
            return out;
        },
        py::arg("shape"), py::arg("points"), "exact signed distance of a shape at world points");

    m.def(
        "oracle_render",
        [](const std::string& prompt, double azimuth, double elevation, int width, int height,
           int samples, double kappa, double beta) {
            hf::OracleField field{hf::parse_prompt(prompt), kappa, beta};
            hf::CameraPose cam;
            const double r = 4.0, ce = std::cos(elevation);
            cam.position = {r * ce * std::cos(azimuth), r * ce * std::sin(azimuth),
                            r * std::sin(elevation)};
            cam.width = width;
            cam.height = height;
            cam.fov_y = 0.5;
            return image_to_array(hf::oracle_render(field, cam, samples, 2.0, 6.0, {1, 1, 1}));
        },
        py::arg("prompt"), py::arg("azimuth") = 0.0, py::arg("elevation") = 0.35,
        py::arg("width") = 64, py::arg("height") = 64, py::arg("samples") = 64,
        py::arg("kappa") = 50.0, py::arg("beta") = 0.02,
        "deterministic reference render of a procedural scene");

    m.def(
        "sinusoidal_encode",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& pts,
           int frequencies, bool include_input) {
            hf::SinusoidalConfig cfg;
            cfg.num_frequencies = frequencies;
            cfg.include_input = include_input;
            return tensor_to_array(hf::sinusoidal_encode(points_from_array(pts), cfg));
        },
        py::arg("points"), py::arg("frequencies") = 6, py::arg("include_input") = true);

    m.def(
        "psnr",
        [](const py::array_t<float, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<float, py::array::c_style | py::array::forcecast>& b) {
            if (a.size() != b.size()) throw std::invalid_argument("size mismatch");
            double s = 0;
            for (py::ssize_t i = 0; i < a.size(); ++i) {
                const double d = static_cast<double>(a.data()[i]) - b.data()[i];
                s += d * d;
            }
            return hf::psnr_from_mse(s / static_cast<double>(a.size()));
        },
        py::arg("a"), py::arg("b"), "10*log10(1/MSE) on unit-range images, capped at 99 dB");

    m.def(
        "gen_data",
        [](const std::string& out_dir, const std::string& config_path, int shapes, int attributes,
           int holdout, int poses, uint64_t seed, bool write_pngs) {
            hf::Config cfg = config_path.empty() ? hf::Config{} : hf::Config::load(config_path);
            if (shapes > 0) cfg.dataset.shapes.resize(static_cast<size_t>(shapes));
            if (attributes > 0) cfg.dataset.attributes.resize(static_cast<size_t>(attributes));
            if (holdout >= 0) cfg.dataset.holdout = holdout;
            if (poses > 0) cfg.dataset.poses_per_scene = poses;
            cfg.seed = seed;
            cfg.validate();
            auto manifest = hf::manifest_from_config(cfg);
            if (write_pngs) {
                hf::write_dataset(manifest, out_dir);
            } else {
                fs::create_directories(out_dir);
                manifest.save((fs::path(out_dir) / "manifest.json").string());
            }
            std::ofstream cf(fs::path(out_dir) / "config.json", std::ios::binary);
            cf << cfg.to_json_text();
            return static_cast<int>(manifest.prompts.size());
        },
        py::arg("out_dir"), py::arg("config") = "", py::arg("shapes") = -1,
        py::arg("attributes") = -1, py::arg("holdout") = -1, py::arg("poses") = -1,
        py::arg("seed") = 1234, py::arg("write_pngs") = true);

    m.def(
        "distill",
        [](const std::string& data_dir, const std::string& out_dir, const std::string& config_path,
           int steps, const std::string& mode, uint64_t seed) {
            hf::Config cfg = config_path.empty() ? hf::Config{} : hf::Config::load(config_path);
            if (steps >= 0) cfg.train.steps = steps;
            if (!mode.empty()) cfg.train.mode = mode;
            cfg.seed = seed;
            cfg.validate();
            auto manifest = hf::DatasetManifest::load(
                (fs::path(data_dir) / "manifest.json").string());
            hf::Distiller d(cfg, manifest, hf::parse_mode(cfg.train.mode));
            const std::string ckpt = d.run(out_dir);
            py::dict out;
            out["checkpoint"] = ckpt;
            out["steps"] = d.current_step();
            out["loss_ema"] = d.loss_ema();
            return out;
        },
        py::arg("data_dir"), py::arg("out_dir"), py::arg("config") = "", py::arg("steps") = -1,
        py::arg("mode") = "", py::arg("seed") = 1234,
        "run the distillation loop against oracle teachers");

    py::class_<PyModel>(m, "Model")
        .def_static("load", &PyModel::load, py::arg("checkpoint"), py::arg("data_dir"),
                    py::arg("config") = "")
        .def("render", &PyModel::render, py::arg("prompt"), py::arg("pose") = 0,
             "full-image render of a prompt, (h, w, 3) in [0,1]")
        .def("conditioning_token", &PyModel::conditioning_token, py::arg("prompt"))
        .def("generated_weights", &PyModel::generated_weights, py::arg("prompt"),
             py::arg("points"), "per-layer weight matrices for a prompt and point batch")
        .def("query", &PyModel::query, py::arg("prompt"), py::arg("points"),
             "density and rgb at world points")
        .def("evaluate", &PyModel::evaluate, py::arg("poses") = -1,
             "zero-shot PSNR and retrieval summary")
        .def("prompts", &PyModel::prompts)
        .def_property_readonly("param_count",
                               [](const PyModel& pm) { return pm.model.param_count(); });

    py::register_exception<hf::VocabError>(m, "VocabError", PyExc_ValueError);
    py::register_exception<hf::ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<hf::CheckpointError>(m, "CheckpointError", PyExc_RuntimeError);
}
