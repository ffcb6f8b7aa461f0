#include "sags/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"
#include "sags/antialias.hpp"
#include "sags/checkpoint.hpp"
#include "sags/image.hpp"
#include "sags/pipeline_ops.hpp"
#include "sags/rasterizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sags {

std::vector<int> SceneDataset::train_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i)
        if (!frames[static_cast<size_t>(i)].test) out.push_back(i);
    return out;
}

std::vector<int> SceneDataset::test_indices() const {
    std::vector<int> out;
    for (int i = 0; i < static_cast<int>(frames.size()); ++i)
        if (frames[static_cast<size_t>(i)].test) out.push_back(i);
    return out;
}

namespace {

Eigen::Vector3d read_vec3(const json& j, const std::string& key) {
    auto a = j.at(key);
    if (!a.is_array() || a.size() != 3)
        throw InputError("scene.json: field '" + key + "' must be a 3-vector");
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

CameraModel read_camera(const json& f, int width, int height, const std::string& where) {
    CameraModel cam;
    cam.fx = f.at("fx").get<double>();
    cam.fy = f.at("fy").get<double>();
    cam.cx = f.at("cx").get<double>();
    cam.cy = f.at("cy").get<double>();
    cam.width = width;
    cam.height = height;
    auto r = f.at("rotation");
    if (!r.is_array() || r.size() != 9)
        throw InputError(where + ": 'rotation' must hold 9 row-major values");
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) cam.rotation(i, j) = r[static_cast<size_t>(i * 3 + j)].get<double>();
    auto t = f.at("translation");
    if (!t.is_array() || t.size() != 3)
        throw InputError(where + ": 'translation' must hold 3 values");
    for (int i = 0; i < 3; ++i) cam.translation(i) = t[static_cast<size_t>(i)].get<double>();
    if (f.contains("near")) cam.near = f.at("near").get<double>();
    if (f.contains("far")) cam.far = f.at("far").get<double>();
    try {
        cam.validate();
    } catch (const std::exception& e) {
        throw InputError(where + ": " + e.what());
    }
    return cam;
}

}  // namespace

SceneDataset load_scene(const std::string& dir) {
    fs::path root(dir);
    fs::path manifest = root / "scene.json";
    std::ifstream in(manifest);
    if (!in) throw InputError("scene: missing manifest " + manifest.string());

    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw InputError("scene.json: " + std::string(e.what()));
    }

    SceneDataset ds;
    ds.root = root.string();
    try {
        ds.width = j.at("width").get<int>();
        ds.height = j.at("height").get<int>();
        ds.aabb_min = read_vec3(j, "aabb_min");
        ds.aabb_max = read_vec3(j, "aabb_max");
        ds.t0 = j.value("t0", 0.0);
        ds.t1 = j.value("t1", 1.0);
        if (ds.width <= 0 || ds.height <= 0) throw InputError("scene.json: bad image size");

        double prev_time = -std::numeric_limits<double>::infinity();
        int idx = 0;
        for (const auto& f : j.at("frames")) {
            std::string where = "scene.json frame " + std::to_string(idx);
            Frame fr;
            fr.image_path = (root / f.at("image").get<std::string>()).string();
            fr.depth_path = (root / f.at("depth").get<std::string>()).string();
            if (f.contains("mask") && !f.at("mask").is_null())
                fr.mask_path = (root / f.at("mask").get<std::string>()).string();
            fr.time = f.at("time").get<double>();
            if (fr.time < prev_time)
                throw InputError(where + ": timestamps must be non-decreasing");
            prev_time = fr.time;
            fr.camera = read_camera(f, ds.width, ds.height, where);
            if (f.contains("test")) fr.test = f.at("test").get<bool>();
            if (!fs::exists(fr.image_path))
                throw InputError(where + ": missing image file " + fr.image_path);
            if (!fs::exists(fr.depth_path))
                throw InputError(where + ": missing depth file " + fr.depth_path);
            if (!fr.mask_path.empty() && !fs::exists(fr.mask_path))
                throw InputError(where + ": missing mask file " + fr.mask_path);
            ds.frames.push_back(std::move(fr));
            ++idx;
        }
    } catch (const json::exception& e) {
        throw InputError("scene.json: " + std::string(e.what()));
    }
    if (ds.frames.empty()) throw InputError("scene.json: no frames listed");

    // an explicit split flag on any frame disables the every-8th default
    bool explicit_split = !j.at("frames").empty() && j.at("frames")[0].contains("test");
    for (const auto& f : ds.frames) explicit_split |= f.test;
    if (!explicit_split)
        for (size_t i = 0; i < ds.frames.size(); ++i) ds.frames[i].test = (i % 8 == 0);
    return ds;
}

GaussianCloud deform_teacher(const GaussianCloud& cloud, const TeacherMotion& motion, double t) {
    if (motion.amplitude.rows() != cloud.size())
        throw InputError("teacher motion table does not match the cloud size");
    GaussianCloud out = cloud;
    for (int i = 0; i < cloud.size(); ++i) {
        double s = std::sin(2.0 * M_PI * motion.frequency(i) * t + motion.phase(i));
        out.positions.row(i) += motion.amplitude.row(i) * s;
    }
    return out;
}

void SyntheticSpec::validate() const {
    if (frame_count < 4) throw ConfigError("synthetic: frame_count must be >= 4");
    if (width <= 0 || height <= 0) throw ConfigError("synthetic: image size must be positive");
    if (teacher_count < 1) throw ConfigError("synthetic: teacher_count must be >= 1");
    if (motion_amplitude < 0) throw ConfigError("synthetic: motion_amplitude must be >= 0");
    if (layout != "random" && layout != "checkerboard")
        throw ConfigError("synthetic: layout must be 'random' or 'checkerboard'");
    if (checker_cells < 1) throw ConfigError("synthetic: checker_cells must be >= 1");
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("spec: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("spec: " + std::string(e.what()));
    }
    static const std::set<std::string> known = {
        "frame_count", "width",  "height",        "teacher_count", "motion_amplitude",
        "motion_frequency", "layout", "checker_cells", "seed"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("spec: unknown key '" + it.key() + "'");
    SyntheticSpec s;
    try {
        s.frame_count = j.value("frame_count", s.frame_count);
        s.width = j.value("width", s.width);
        s.height = j.value("height", s.height);
        s.teacher_count = j.value("teacher_count", s.teacher_count);
        s.motion_amplitude = j.value("motion_amplitude", s.motion_amplitude);
        s.motion_frequency = j.value("motion_frequency", s.motion_frequency);
        s.layout = j.value("layout", s.layout);
        s.checker_cells = j.value("checker_cells", s.checker_cells);
        s.seed = j.value("seed", s.seed);
    } catch (const json::exception& e) {
        throw ConfigError("spec: " + std::string(e.what()));
    }
    s.validate();
    return s;
}

namespace {

CameraModel look_at_camera(const Eigen::Vector3d& eye, const Eigen::Vector3d& target, int width,
                           int height) {
    Eigen::Vector3d fwd = (target - eye).normalized();
    Eigen::Vector3d up(0, 1, 0);
    if (std::abs(fwd.dot(up)) > 0.99) up = Eigen::Vector3d(1, 0, 0);
    Eigen::Vector3d right = up.cross(fwd).normalized();
    Eigen::Vector3d down = fwd.cross(right);  // camera +y points down the image

    CameraModel cam;
    cam.rotation.row(0) = right.transpose();
    cam.rotation.row(1) = down.transpose();
    cam.rotation.row(2) = fwd.transpose();
    cam.translation = -cam.rotation * eye;
    cam.width = width;
    cam.height = height;
    double focal = 0.5 * width / std::tan(0.5 * 50.0 * M_PI / 180.0);
    cam.fx = cam.fy = focal;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.validate();
    return cam;
}

struct Teacher {
    GaussianCloud cloud;
    TeacherMotion motion;
};

Teacher build_teacher(const SyntheticSpec& spec) {
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);

    Teacher t;
    GaussianCloud& c = t.cloud;
    int n;
    if (spec.layout == "checkerboard") {
        int per_side = spec.checker_cells * 4;
        n = per_side * per_side;
        c.positions.resize(n, 3);
        c.log_scales.resize(n, 3);
        c.rotations.resize(n, 4);
        c.sh_degree = 2;
        c.sh_coeffs = Eigen::MatrixXd::Zero(n, 3 * c.sh_count());
        c.opacity_logits.resize(n);
        double spacing = 1.0 / per_side;
        int k = 0;
        for (int i = 0; i < per_side; ++i)
            for (int j = 0; j < per_side; ++j, ++k) {
                c.positions.row(k) << (i + 0.5) * spacing - 0.5, (j + 0.5) * spacing - 0.5, 0.0;
                c.log_scales.row(k).setConstant(std::log(0.55 * spacing));
                c.rotations.row(k) << 1, 0, 0, 0;
                int ci = i * spec.checker_cells / per_side;
                int cj = j * spec.checker_cells / per_side;
                double shade = ((ci + cj) % 2 == 0) ? 0.9 : 0.1;
                for (int ch = 0; ch < 3; ++ch)
                    c.sh_coeffs(k, ch) = (shade - 0.5) / 0.28209479177387814;
                c.opacity_logits(k) = logit(0.95);
            }
    } else {
        n = spec.teacher_count;
        c.positions.resize(n, 3);
        c.log_scales.resize(n, 3);
        c.rotations.resize(n, 4);
        c.sh_degree = 2;
        c.sh_coeffs = Eigen::MatrixXd::Zero(n, 3 * c.sh_count());
        c.opacity_logits.resize(n);
        for (int i = 0; i < n; ++i) {
            for (int a = 0; a < 3; ++a) c.positions(i, a) = uni(rng) - 0.5;
            for (int a = 0; a < 3; ++a)
                c.log_scales(i, a) = std::log(0.02 + 0.04 * uni(rng));
            Eigen::Vector4d q(uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5, uni(rng) - 0.5);
            q.normalize();
            c.rotations.row(i) = q.transpose();
            for (int ch = 0; ch < 3; ++ch) {
                double col = 0.2 + 0.7 * uni(rng);
                c.sh_coeffs(i, ch) = (col - 0.5) / 0.28209479177387814;
            }
            // mild view dependence in the degree-1 band
            for (int kk = 1; kk < 4; ++kk)
                for (int ch = 0; ch < 3; ++ch)
                    c.sh_coeffs(i, kk * 3 + ch) = 0.1 * (uni(rng) - 0.5);
            c.opacity_logits(i) = logit(0.6 + 0.35 * uni(rng));
        }
    }

    // spatially coherent motion: amplitude and phase are smooth fields over
    // position (tissue-like bulging rather than per-primitive jitter)
    t.motion.amplitude.resize(n, 3);
    t.motion.frequency.resize(n);
    t.motion.phase.resize(n);
    Eigen::Matrix3d wave;
    Eigen::Vector3d shift;
    for (int a = 0; a < 3; ++a) {
        for (int b = 0; b < 3; ++b) wave(a, b) = (3.0 + 3.0 * uni(rng)) * (uni(rng) < 0.5 ? -1 : 1);
        shift(a) = 2.0 * M_PI * uni(rng);
    }
    Eigen::Vector3d pwave = 2.0 * Eigen::Vector3d(uni(rng), uni(rng), uni(rng));
    for (int i = 0; i < n; ++i) {
        Eigen::Vector3d pos = c.positions.row(i).transpose();
        for (int a = 0; a < 3; ++a)
            t.motion.amplitude(i, a) =
                spec.motion_amplitude * std::sin(wave.row(a).dot(pos) + shift(a));
        t.motion.frequency(i) = spec.motion_frequency;
        t.motion.phase(i) = pwave.dot(pos);
    }
    c.max_sampling_rate = Eigen::VectorXd::Zero(n);
    c.validate();
    return t;
}

json camera_json(const CameraModel& cam) {
    json f;
    f["fx"] = cam.fx;
    f["fy"] = cam.fy;
    f["cx"] = cam.cx;
    f["cy"] = cam.cy;
    f["near"] = cam.near;
    f["far"] = cam.far;
    std::vector<double> r;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) r.push_back(cam.rotation(i, j));
    f["rotation"] = r;
    f["translation"] = {cam.translation(0), cam.translation(1), cam.translation(2)};
    return f;
}

std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    return buf;
}

}  // namespace

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir) {
    spec.validate();
    Teacher teacher = build_teacher(spec);

    // AABB covering the full motion envelope plus a scale margin
    Eigen::Vector3d lo = teacher.cloud.positions.colwise().minCoeff().transpose();
    Eigen::Vector3d hi = teacher.cloud.positions.colwise().maxCoeff().transpose();
    Eigen::Vector3d margin =
        Eigen::Vector3d::Constant(spec.motion_amplitude + 0.15 * (hi - lo).norm() + 1e-3);
    lo -= margin;
    hi += margin;

    fs::create_directories(fs::path(out_dir) / "images");
    fs::create_directories(fs::path(out_dir) / "depth");

    // camera arc around the scene center
    std::vector<CameraModel> cams;
    Eigen::Vector3d center = 0.5 * (lo + hi);
    double radius = 2.2 * (hi - lo).norm() * 0.5;
    for (int i = 0; i < spec.frame_count; ++i) {
        double a = -0.35 + 0.7 * i / std::max(1, spec.frame_count - 1);  // radians
        // radial zoom cycle: held-out frames (every 8th) sit at the far point,
        // so evaluation exercises coarser sampling rates than most training views
        double zoom = 1.1 + 0.35 * std::cos(2.0 * M_PI * i / 8.0);
        Eigen::Vector3d eye =
            center + zoom * radius * Eigen::Vector3d(std::sin(a), 0.25, -std::cos(a));
        cams.push_back(look_at_camera(eye, center, spec.width, spec.height));
    }

    // sampling-rate cache over the canonical positions, all cameras
    for (int i = 0; i < teacher.cloud.size(); ++i)
        teacher.cloud.max_sampling_rate(i) =
            max_sampling_rate(cams, teacher.cloud.positions.row(i).transpose());

    FilterConfig filt;  // defaults: both filters on
    RenderConfig rcfg;
    Eigen::Vector3d background(0, 0, 0);

    json manifest;
    manifest["width"] = spec.width;
    manifest["height"] = spec.height;
    manifest["aabb_min"] = {lo(0), lo(1), lo(2)};
    manifest["aabb_max"] = {hi(0), hi(1), hi(2)};
    manifest["t0"] = 0.0;
    manifest["t1"] = 1.0;
    manifest["frames"] = json::array();

    for (int i = 0; i < spec.frame_count; ++i) {
        double t = static_cast<double>(i) / (spec.frame_count - 1);
        GaussianCloud deformed = deform_teacher(teacher.cloud, teacher.motion, t);
        PreparedSplats prep = prepare_splats(deformed, cams[static_cast<size_t>(i)], filt);
        RasterForward fw = raster_forward(prep.packed, prep.valid, spec.width, spec.height,
                                          background, rcfg, /*tiled=*/false);

        Image img;
        img.width = spec.width;
        img.height = spec.height;
        img.data = fw.out.color;
        std::string img_rel = "images/" + frame_name(i) + ".png";
        std::string depth_rel = "depth/" + frame_name(i) + ".pfm";
        save_png(img, (fs::path(out_dir) / img_rel).string());

        Eigen::MatrixXd depth(spec.height, spec.width);
        for (int r = 0; r < spec.height; ++r)
            for (int c = 0; c < spec.width; ++c)
                depth(r, c) = fw.out.depth[static_cast<size_t>(r) * spec.width + c];
        save_pfm(depth, (fs::path(out_dir) / depth_rel).string());

        json f = camera_json(cams[static_cast<size_t>(i)]);
        f["image"] = img_rel;
        f["depth"] = depth_rel;
        f["time"] = t;
        f["test"] = (i % 8 == 0);
        manifest["frames"].push_back(f);
    }

    {
        std::ofstream out(fs::path(out_dir) / "scene.json");
        out << manifest.dump(2) << "\n";
        if (!out) throw InputError("synthetic: failed to write scene.json");
    }

    Checkpoint ckpt;
    ckpt.kind = Checkpoint::Kind::analytic;
    ckpt.mode = "teacher";
    ckpt.cloud = teacher.cloud;
    ckpt.filters = filt;
    ckpt.motion = teacher.motion;
    std::string ckpt_path = (fs::path(out_dir) / "teacher.ckpt").string();
    save_checkpoint(ckpt, ckpt_path);

    SyntheticResult res;
    res.dataset = load_scene(out_dir);
    res.teacher_checkpoint = ckpt_path;
    return res;
}

}  // namespace sags
