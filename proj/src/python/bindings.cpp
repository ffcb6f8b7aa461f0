#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "sags/decoder.hpp"
#include "sags/metrics.hpp"
#include "sags/pipeline_ops.hpp"
#include "sags/trainer.hpp"

namespace py = pybind11;
using namespace sags;

namespace {

py::array_t<double> image_array(const RenderOutput& out) {
    py::array_t<double> arr({out.height, out.width, 3});
    std::copy(out.color.begin(), out.color.end(), arr.mutable_data());
    return arr;
}

std::vector<double> flatten(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
    return {a.data(), a.data() + a.size()};
}

TrainConfig config_from_dict(const py::dict& overrides) {
    TrainConfig cfg;
    for (auto item : overrides) {
        std::string key = py::cast<std::string>(item.first);
        auto num = [&] { return py::cast<double>(item.second); };
        if (key == "lambda1") cfg.lambda1 = num();
        else if (key == "lambda2") cfg.lambda2 = num();
        else if (key == "lambda3") cfg.lambda3 = num();
        else if (key == "lambda4") cfg.lambda4 = num();
        else if (key == "lr") cfg.lr = num();
        else if (key == "position_lr_mult") cfg.position_lr_mult = num();
        else if (key == "warmup_iters") cfg.warmup_iters = static_cast<int>(num());
        else if (key == "total_iters") cfg.total_iters = static_cast<int>(num());
        else if (key == "densify_interval") cfg.densify_interval = static_cast<int>(num());
        else if (key == "densify_start") cfg.densify_start = static_cast<int>(num());
        else if (key == "densify_stop") cfg.densify_stop = static_cast<int>(num());
        else if (key == "seed") cfg.seed = static_cast<uint64_t>(num());
        else if (key == "workers") cfg.workers = static_cast<int>(num());
        else if (key == "s3d") cfg.filters.s3d = num();
        else if (key == "s2d") cfg.filters.s2d = num();
        else if (key == "enable3d") cfg.filters.enable3d = py::cast<bool>(item.second);
        else if (key == "enable2d") cfg.filters.enable2d = py::cast<bool>(item.second);
        else if (key == "feature_dim") cfg.feature_dim = static_cast<int>(num());
        else if (key == "heads") cfg.heads = static_cast<int>(num());
        else if (key == "spatial_res") cfg.spatial_res = static_cast<int>(num());
        else if (key == "temporal_res") cfg.temporal_res = static_cast<int>(num());
        else if (key == "init_points") cfg.init_points = static_cast<int>(num());
        else if (key == "sh_degree") cfg.sh_degree = static_cast<int>(num());
        else throw ConfigError("config: unknown key '" + key + "'");
    }
    cfg.validate();
    return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Dynamic Gaussian splatting: training, rendering, and metrics.";

    py::register_exception<ConfigError>(m, "SagsConfigError", PyExc_ValueError);
    py::register_exception<InputError>(m, "SagsInputError", PyExc_ValueError);
    py::register_exception<NumericalAbort>(m, "SagsNumericalAbort", PyExc_ArithmeticError);

    m.def(
        "synth",
        [](const std::string& out_dir, int frame_count, int width, int height, int teacher_count,
           double motion_amplitude, const std::string& layout, uint64_t seed) {
            SyntheticSpec spec;
            spec.frame_count = frame_count;
            spec.width = width;
            spec.height = height;
            spec.teacher_count = teacher_count;
            spec.motion_amplitude = motion_amplitude;
            spec.layout = layout;
            spec.seed = seed;
            SyntheticResult res = generate_synthetic(spec, out_dir);
            return py::make_tuple(static_cast<int>(res.dataset.frames.size()),
                                  res.teacher_checkpoint);
        },
        py::arg("out_dir"), py::arg("frame_count") = 24, py::arg("width") = 64,
        py::arg("height") = 64, py::arg("teacher_count") = 300,
        py::arg("motion_amplitude") = 0.08, py::arg("layout") = "random", py::arg("seed") = 1,
        "Generate a synthetic dynamic scene; returns (frame_count, teacher_checkpoint_path).");

    m.def(
        "train",
        [](const std::string& scene_dir, const std::string& ckpt_path,
           const std::string& csv_path, const std::string& mode, const py::dict& config) {
            SceneDataset scene = load_scene(scene_dir);
            TrainConfig cfg = config_from_dict(config);
            TrainResult res;
            {
                py::gil_scoped_release release;
                res = train(scene, cfg, mode, csv_path, ckpt_path);
            }
            return res.final_train_psnr;
        },
        py::arg("scene_dir"), py::arg("ckpt_path"), py::arg("csv_path"),
        py::arg("mode") = "full", py::arg("config") = py::dict(),
        "Train on a scene directory; returns the final training PSNR.");

    m.def(
        "render_frame",
        [](const std::string& ckpt_path, const std::string& scene_dir, int frame) {
            SceneDataset scene = load_scene(scene_dir);
            if (frame < 0 || frame >= static_cast<int>(scene.frames.size()))
                throw InputError("render: frame index out of range");
            Checkpoint ckpt = load_checkpoint(ckpt_path);
            const Frame& f = scene.frames[static_cast<size_t>(frame)];
            RenderConfig rcfg;
            RenderOutput out = render_checkpoint(ckpt, f.camera, f.time, {0, 0, 0}, rcfg);
            return image_array(out);
        },
        py::arg("ckpt_path"), py::arg("scene_dir"), py::arg("frame"),
        "Render one dataset frame from a checkpoint as an H x W x 3 array.");

    m.def(
        "evaluate",
        [](const std::string& ckpt_path, const std::string& scene_dir, const std::string& split) {
            SceneDataset scene = load_scene(scene_dir);
            Checkpoint ckpt = load_checkpoint(ckpt_path);
            std::vector<int> idx;
            if (split == "test") idx = scene.test_indices();
            else if (split == "train") idx = scene.train_indices();
            else if (split == "all")
                for (size_t i = 0; i < scene.frames.size(); ++i) idx.push_back(static_cast<int>(i));
            else throw ConfigError("evaluate: split must be test|train|all");
            EvalReport rep = evaluate(ckpt, scene, idx);
            py::dict out;
            out["mean_psnr"] = rep.mean_psnr;
            out["mean_ssim"] = rep.mean_ssim;
            py::list rows;
            for (const EvalRow& r : rep.rows)
                rows.append(py::make_tuple(r.frame, r.psnr, r.ssim));
            out["rows"] = rows;
            return out;
        },
        py::arg("ckpt_path"), py::arg("scene_dir"), py::arg("split") = "test");

    m.def(
        "psnr",
        [](const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
           const py::array_t<double, py::array::c_style | py::array::forcecast>& b, double peak) {
            PsnrResult r = psnr(flatten(a), flatten(b), peak);
            return py::make_tuple(r.psnr, r.mse, r.infinite);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0,
        "(psnr_db, mse, is_infinite) over two equal-shaped arrays.");

    m.def(
        "ssim",
        [](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double peak) {
            return ssim(a, b, peak);
        },
        py::arg("a"), py::arg("b"), py::arg("peak") = 1.0,
        "Mean SSIM over valid 11x11 windows of two single-channel images.");

    m.def("attention", &attention, py::arg("q"), py::arg("k"), py::arg("v"),
          "softmax(Q K^T / sqrt(d_k)) V");

    m.def(
        "encode_field",
        [](int feature_dim, int spatial_res, int temporal_res, uint64_t seed,
           const Eigen::Vector3d& mu, double t) {
            HexPlaneField f = make_hexplane(feature_dim, spatial_res, temporal_res, {-1, -1, -1},
                                            {1, 1, 1}, 0, 1, seed);
            return encode(f, mu, t);
        },
        py::arg("feature_dim"), py::arg("spatial_res"), py::arg("temporal_res"), py::arg("seed"),
        py::arg("mu"), py::arg("t"),
        "Six-plane spatiotemporal encoding of a point in the unit box.");
}
