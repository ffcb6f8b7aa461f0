#include "sags/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "json.hpp"
#include "sags/geometry.hpp"
#include "sags/image.hpp"
#include "sags/metrics.hpp"
#include "sags/pipeline_ops.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace sags {

// ---- checkpoint container ----

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

namespace {

constexpr char kMagic[8] = {'S', 'A', 'G', 'S', 'C', 'K', '0', '1'};

struct Writer {
    std::string buf;

    void raw(const void* p, size_t n) { buf.append(static_cast<const char*>(p), n); }
    void u8(uint8_t v) { raw(&v, 1); }
    void u32(uint32_t v) { raw(&v, 4); }
    void u64(uint64_t v) { raw(&v, 8); }
    void f64(double v) { raw(&v, 8); }
    void str(const std::string& s) {
        u32(static_cast<uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void mat(const Eigen::MatrixXd& m) {
        u64(static_cast<uint64_t>(m.rows()));
        u64(static_cast<uint64_t>(m.cols()));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) f64(m(i, j));
    }
};

struct Reader {
    const std::string& buf;
    size_t off = 0;
    std::string section;

    void need(size_t n) const {
        if (off + n > buf.size())
            throw InputError("checkpoint: truncated section '" + section + "'");
    }
    void raw(void* p, size_t n) {
        need(n);
        std::memcpy(p, buf.data() + off, n);
        off += n;
    }
    uint8_t u8() {
        uint8_t v;
        raw(&v, 1);
        return v;
    }
    uint32_t u32() {
        uint32_t v;
        raw(&v, 4);
        return v;
    }
    uint64_t u64() {
        uint64_t v;
        raw(&v, 8);
        return v;
    }
    double f64() {
        double v;
        raw(&v, 8);
        return v;
    }
    std::string str() {
        uint32_t n = u32();
        need(n);
        std::string s(buf.data() + off, n);
        off += n;
        return s;
    }
    Eigen::MatrixXd mat() {
        uint64_t r = u64(), c = u64();
        if (r > (1ULL << 32) || c > (1ULL << 32))
            throw InputError("checkpoint: corrupt section '" + section + "'");
        Eigen::MatrixXd m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = f64();
        return m;
    }
    bool done() const { return off >= buf.size(); }
};

void write_section(std::ofstream& out, const std::string& name, const std::string& payload) {
    Writer hdr;
    hdr.str(name);
    hdr.u64(payload.size());
    out.write(hdr.buf.data(), static_cast<std::streamsize>(hdr.buf.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
}

std::string pack_header(const Checkpoint& c) {
    Writer w;
    w.u32(c.kind == Checkpoint::Kind::learned ? 0u : 1u);
    w.str(c.mode);
    w.u64(c.config_hash);
    w.u64(c.iteration);
    return w.buf;
}

std::string pack_filters(const FilterConfig& f) {
    Writer w;
    w.f64(f.s3d);
    w.f64(f.s2d);
    w.u8(f.enable3d ? 1 : 0);
    w.u8(f.enable2d ? 1 : 0);
    return w.buf;
}

std::string pack_cloud(const GaussianCloud& c) {
    Writer w;
    w.u32(static_cast<uint32_t>(c.sh_degree));
    w.mat(c.positions);
    w.mat(c.log_scales);
    w.mat(c.rotations);
    w.mat(c.sh_coeffs);
    w.mat(c.opacity_logits);
    w.mat(c.max_sampling_rate);
    return w.buf;
}

std::string pack_field(const HexPlaneField& f) {
    Writer w;
    w.u32(static_cast<uint32_t>(f.feature_dim));
    for (int a = 0; a < 3; ++a) w.f64(f.aabb_min(a));
    for (int a = 0; a < 3; ++a) w.f64(f.aabb_max(a));
    w.f64(f.t0);
    w.f64(f.t1);
    for (int p = 0; p < 6; ++p) {
        w.u32(static_cast<uint32_t>(f.resolution[static_cast<size_t>(p)].first));
        w.u32(static_cast<uint32_t>(f.resolution[static_cast<size_t>(p)].second));
        w.mat(f.planes[static_cast<size_t>(p)]);
    }
    return w.buf;
}

std::string pack_decoder(const SadDecoder& d) {
    Writer w;
    w.u32(static_cast<uint32_t>(d.feature_dim));
    w.u32(static_cast<uint32_t>(d.heads));
    w.u32(static_cast<uint32_t>(d.chunk_size));
    w.u8(d.plain ? 1 : 0);
    w.u8(d.use_sh_head ? 1 : 0);
    w.f64(d.gamma1);
    w.f64(d.gamma2);
    w.mat(d.alpha_pre);
    w.mat(d.beta_pre);
    w.mat(d.alpha_post);
    w.mat(d.beta_post);
    for (int k = 0; k < d.heads; ++k) {
        w.mat(d.wq[static_cast<size_t>(k)]);
        w.mat(d.wk[static_cast<size_t>(k)]);
        w.mat(d.wv[static_cast<size_t>(k)]);
    }
    w.mat(d.wo);
    w.mat(d.w1);
    w.mat(d.b1);
    w.mat(d.w2);
    w.mat(d.b2);
    w.mat(d.head_mu);
    w.mat(d.bias_mu);
    w.mat(d.head_scale);
    w.mat(d.bias_scale);
    w.mat(d.head_rot);
    w.mat(d.bias_rot);
    w.mat(d.head_sh);
    w.mat(d.bias_sh);
    w.mat(d.head_sigma);
    w.mat(d.bias_sigma);
    w.mat(d.p1);
    w.mat(d.pb1);
    w.mat(d.p2);
    w.mat(d.pb2);
    return w.buf;
}

std::string pack_motion(const TeacherMotion& m) {
    Writer w;
    w.mat(m.amplitude);
    w.mat(m.frequency);
    w.mat(m.phase);
    return w.buf;
}

std::string pack_adam(const Checkpoint& c) {
    Writer w;
    w.u64(c.adam_step);
    w.u32(static_cast<uint32_t>(c.adam.size()));
    for (const auto& [name, mv] : c.adam) {
        w.str(name);
        w.mat(mv.first);
        w.mat(mv.second);
    }
    return w.buf;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("checkpoint: cannot write " + tmp);
        out.write(kMagic, sizeof(kMagic));
        write_section(out, "header", pack_header(ckpt));
        write_section(out, "filters", pack_filters(ckpt.filters));
        write_section(out, "cloud", pack_cloud(ckpt.cloud));
        if (ckpt.kind == Checkpoint::Kind::learned) {
            write_section(out, "field", pack_field(ckpt.field));
            write_section(out, "decoder", pack_decoder(ckpt.decoder));
            write_section(out, "adam", pack_adam(ckpt));
        } else {
            write_section(out, "motion", pack_motion(ckpt.motion));
        }
        if (!out) throw InputError("checkpoint: write failed for " + tmp);
    }
    fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path, const std::string& expected_mode,
                           bool allow_mode_mismatch) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("checkpoint: cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    std::string file = ss.str();
    if (file.size() < sizeof(kMagic) || std::memcmp(file.data(), kMagic, sizeof(kMagic)) != 0)
        throw InputError("checkpoint: bad magic/version in " + path);

    std::map<std::string, std::string> sections;
    {
        Reader r{file, 0, "container"};
        r.off = sizeof(kMagic);
        while (!r.done()) {
            std::string name = r.str();
            r.section = name;
            uint64_t len = r.u64();
            r.need(len);
            sections[name] = file.substr(r.off, len);
            r.off += len;
            r.section = "container";
        }
    }

    auto section = [&](const std::string& name) -> Reader {
        auto it = sections.find(name);
        if (it == sections.end())
            throw InputError("checkpoint: missing section '" + name + "' in " + path);
        Reader r{it->second, 0, name};
        return r;
    };

    Checkpoint c;
    {
        Reader r = section("header");
        uint32_t kind = r.u32();
        if (kind > 1) throw InputError("checkpoint: corrupt section 'header'");
        c.kind = (kind == 0) ? Checkpoint::Kind::learned : Checkpoint::Kind::analytic;
        c.mode = r.str();
        c.config_hash = r.u64();
        c.iteration = r.u64();
    }
    if (!expected_mode.empty() && c.mode != expected_mode && !allow_mode_mismatch)
        throw ConfigError("checkpoint: mode '" + c.mode + "' does not match expected '" +
                          expected_mode + "' (pass the compatibility flag to override)");
    {
        Reader r = section("filters");
        c.filters.s3d = r.f64();
        c.filters.s2d = r.f64();
        c.filters.enable3d = r.u8() != 0;
        c.filters.enable2d = r.u8() != 0;
    }
    {
        Reader r = section("cloud");
        c.cloud.sh_degree = static_cast<int>(r.u32());
        c.cloud.positions = r.mat();
        c.cloud.log_scales = r.mat();
        c.cloud.rotations = r.mat();
        c.cloud.sh_coeffs = r.mat();
        c.cloud.opacity_logits = r.mat();
        c.cloud.max_sampling_rate = r.mat();
        c.cloud.validate();
    }
    if (c.kind == Checkpoint::Kind::learned) {
        {
            Reader r = section("field");
            c.field.feature_dim = static_cast<int>(r.u32());
            for (int a = 0; a < 3; ++a) c.field.aabb_min(a) = r.f64();
            for (int a = 0; a < 3; ++a) c.field.aabb_max(a) = r.f64();
            c.field.t0 = r.f64();
            c.field.t1 = r.f64();
            for (int p = 0; p < 6; ++p) {
                int d1 = static_cast<int>(r.u32());
                int d2 = static_cast<int>(r.u32());
                c.field.resolution[static_cast<size_t>(p)] = {d1, d2};
                c.field.planes[static_cast<size_t>(p)] = r.mat();
            }
            c.field.validate();
        }
        {
            Reader r = section("decoder");
            SadDecoder& d = c.decoder;
            d.feature_dim = static_cast<int>(r.u32());
            d.heads = static_cast<int>(r.u32());
            d.chunk_size = static_cast<int>(r.u32());
            d.plain = r.u8() != 0;
            d.use_sh_head = r.u8() != 0;
            if (d.heads <= 0 || d.feature_dim <= 0 || d.feature_dim % d.heads != 0)
                throw InputError("checkpoint: corrupt section 'decoder'");
            d.head_dim = d.feature_dim / d.heads;
            d.gamma1 = r.f64();
            d.gamma2 = r.f64();
            d.alpha_pre = r.mat();
            d.beta_pre = r.mat();
            d.alpha_post = r.mat();
            d.beta_post = r.mat();
            d.wq.clear();
            d.wk.clear();
            d.wv.clear();
            for (int k = 0; k < d.heads; ++k) {
                d.wq.push_back(r.mat());
                d.wk.push_back(r.mat());
                d.wv.push_back(r.mat());
            }
            d.wo = r.mat();
            d.w1 = r.mat();
            d.b1 = r.mat();
            d.w2 = r.mat();
            d.b2 = r.mat();
            d.head_mu = r.mat();
            d.bias_mu = r.mat();
            d.head_scale = r.mat();
            d.bias_scale = r.mat();
            d.head_rot = r.mat();
            d.bias_rot = r.mat();
            d.head_sh = r.mat();
            d.bias_sh = r.mat();
            d.head_sigma = r.mat();
            d.bias_sigma = r.mat();
            d.p1 = r.mat();
            d.pb1 = r.mat();
            d.p2 = r.mat();
            d.pb2 = r.mat();
        }
        {
            Reader r = section("adam");
            c.adam_step = r.u64();
            uint32_t n = r.u32();
            for (uint32_t i = 0; i < n; ++i) {
                std::string name = r.str();
                Eigen::MatrixXd m = r.mat();
                Eigen::MatrixXd v = r.mat();
                c.adam[name] = {std::move(m), std::move(v)};
            }
        }
    } else {
        Reader r = section("motion");
        c.motion.amplitude = r.mat();
        c.motion.frequency = r.mat();
        c.motion.phase = r.mat();
    }
    return c;
}

// ---- configuration ----

void TrainConfig::validate() const {
    if (lambda1 < 0 || lambda2 < 0 || lambda3 < 0 || lambda4 < 0)
        throw ConfigError("config: loss weights must be non-negative");
    if (lr < 0) throw ConfigError("config: lr must be non-negative");
    if (warmup_iters < 0 || total_iters < 0)
        throw ConfigError("config: iteration counts must be non-negative");
    if (total_iters > 0 && warmup_iters >= total_iters)
        throw ConfigError("config: warmup_iters must be below total_iters");
    if (densify_interval <= 0) throw ConfigError("config: densify_interval must be positive");
    if (workers < 1) throw ConfigError("config: workers must be >= 1");
    if (feature_dim <= 0 || heads <= 0 || feature_dim % heads != 0)
        throw ConfigError("config: heads must divide feature_dim");
    if (spatial_res < 2 || temporal_res < 2)
        throw ConfigError("config: grid resolutions must be >= 2");
    if (init_points < 1) throw ConfigError("config: init_points must be >= 1");
    if (sh_degree < 0 || sh_degree > 3) throw ConfigError("config: sh_degree must be in [0,3]");
    filters.validate();
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw InputError("config: cannot open " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }

    static const std::set<std::string> known = {
        "lambda1", "lambda2", "lambda3", "lambda4", "lr", "position_lr_mult",
        "warmup_iters", "total_iters", "densify_interval", "densify_start", "densify_stop",
        "seed", "workers", "s3d", "s2d", "enable3d", "enable2d", "filter.s3d", "filter.s2d",
        "filter.enable3d", "filter.enable2d", "feature_dim", "heads",
        "spatial_res", "temporal_res", "init_points", "sh_degree"};
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError("config: unknown key '" + it.key() + "'");

    TrainConfig c;
    try {
        c.lambda1 = j.value("lambda1", c.lambda1);
        c.lambda2 = j.value("lambda2", c.lambda2);
        c.lambda3 = j.value("lambda3", c.lambda3);
        c.lambda4 = j.value("lambda4", c.lambda4);
        c.lr = j.value("lr", c.lr);
        c.position_lr_mult = j.value("position_lr_mult", c.position_lr_mult);
        c.warmup_iters = j.value("warmup_iters", c.warmup_iters);
        c.total_iters = j.value("total_iters", c.total_iters);
        c.densify_interval = j.value("densify_interval", c.densify_interval);
        c.densify_start = j.value("densify_start", c.densify_start);
        c.densify_stop = j.value("densify_stop", c.densify_stop);
        c.seed = j.value("seed", c.seed);
        c.workers = j.value("workers", c.workers);
        c.filters.s3d = j.value("s3d", c.filters.s3d);
        c.filters.s2d = j.value("s2d", c.filters.s2d);
        c.filters.enable3d = j.value("enable3d", c.filters.enable3d);
        c.filters.enable2d = j.value("enable2d", c.filters.enable2d);
        c.filters.s3d = j.value("filter.s3d", c.filters.s3d);
        c.filters.s2d = j.value("filter.s2d", c.filters.s2d);
        c.filters.enable3d = j.value("filter.enable3d", c.filters.enable3d);
        c.filters.enable2d = j.value("filter.enable2d", c.filters.enable2d);
        c.feature_dim = j.value("feature_dim", c.feature_dim);
        c.heads = j.value("heads", c.heads);
        c.spatial_res = j.value("spatial_res", c.spatial_res);
        c.temporal_res = j.value("temporal_res", c.temporal_res);
        c.init_points = j.value("init_points", c.init_points);
        c.sh_degree = j.value("sh_degree", c.sh_degree);
    } catch (const json::exception& e) {
        throw ConfigError("config: " + std::string(e.what()));
    }
    c.validate();
    return c;
}

uint64_t config_hash(const TrainConfig& c, const std::string& mode) {
    char buf[1024];
    std::snprintf(buf, sizeof(buf),
                  "%.17g|%.17g|%.17g|%.17g|%.17g|%.17g|%d|%d|%d|%d|%d|%llu|%.17g|%.17g|%d|%d|%d|"
                  "%d|%d|%d|%d|%d|%s",
                  c.lambda1, c.lambda2, c.lambda3, c.lambda4, c.lr, c.position_lr_mult,
                  c.warmup_iters, c.total_iters, c.densify_interval, c.densify_start,
                  c.densify_stop, static_cast<unsigned long long>(c.seed), c.filters.s3d,
                  c.filters.s2d, c.filters.enable3d ? 1 : 0, c.filters.enable2d ? 1 : 0,
                  c.feature_dim, c.heads, c.spatial_res, c.temporal_res, c.init_points,
                  c.sh_degree, mode.c_str());
    return fnv1a(buf);
}

// ---- rendering from a checkpoint ----

RenderOutput render_checkpoint(const Checkpoint& ckpt, const CameraModel& cam, double t,
                               const Eigen::Vector3d& background, const RenderConfig& rcfg,
                               bool bruteforce) {
    GaussianCloud deformed;
    if (ckpt.kind == Checkpoint::Kind::analytic) {
        deformed = deform_teacher(ckpt.cloud, ckpt.motion, t);
    } else {
        deformed = deform(ckpt.cloud, ckpt.field, ckpt.decoder, t).cloud;
    }
    PreparedSplats prep = prepare_splats(deformed, cam, ckpt.filters);
    RasterForward fw = raster_forward(prep.packed, prep.valid, cam.width, cam.height, background,
                                      rcfg, !bruteforce);
    return fw.out;
}

// ---- optimizer ----

namespace {

struct Adam {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;
    uint64_t step = 0;
    std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> slots;

    void update(const std::string& name, Eigen::MatrixXd& value, const Eigen::MatrixXd& grad,
                double lr) {
        auto& [m, v] = slots[name];
        if (m.size() == 0) {
            m = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
            v = Eigen::MatrixXd::Zero(grad.rows(), grad.cols());
        }
        if (m.rows() != grad.rows() || m.cols() != grad.cols())
            throw NumericalAbort("optimizer: moment shape mismatch for " + name);
        m = beta1 * m + (1 - beta1) * grad;
        v = (beta2 * v.array() + (1 - beta2) * grad.array().square()).matrix();
        double bc1 = 1 - std::pow(beta1, static_cast<double>(step));
        double bc2 = 1 - std::pow(beta2, static_cast<double>(step));
        value -= (lr / bc1) *
                 (m.array() / ((v.array() / bc2).sqrt() + eps)).matrix();
    }

    // carries per-primitive moments across densification
    void remap_rows(const std::string& name, const std::vector<int>& source_index) {
        auto it = slots.find(name);
        if (it == slots.end() || it->second.first.size() == 0) return;
        auto& [m, v] = it->second;
        Eigen::MatrixXd m2(static_cast<Eigen::Index>(source_index.size()), m.cols());
        Eigen::MatrixXd v2(static_cast<Eigen::Index>(source_index.size()), v.cols());
        for (size_t i = 0; i < source_index.size(); ++i) {
            m2.row(static_cast<Eigen::Index>(i)) = m.row(source_index[i]);
            v2.row(static_cast<Eigen::Index>(i)) = v.row(source_index[i]);
        }
        m = std::move(m2);
        v = std::move(v2);
    }
};

struct ParamBinding {
    std::string name;
    ad::Var var;
    double lr_mult = 1.0;
    std::function<Eigen::MatrixXd()> get;
    std::function<void(const Eigen::MatrixXd&)> set;
};

std::vector<CameraModel> train_cameras(const SceneDataset& scene) {
    std::vector<CameraModel> cams;
    for (int i : scene.train_indices()) cams.push_back(scene.frames[static_cast<size_t>(i)].camera);
    return cams;
}

void refresh_sampling_rates(GaussianCloud& cloud, const std::vector<CameraModel>& cams) {
    cloud.max_sampling_rate.resize(cloud.size());
    for (int i = 0; i < cloud.size(); ++i)
        cloud.max_sampling_rate(i) = max_sampling_rate(cams, cloud.positions.row(i).transpose());
}

struct FrameData {
    Eigen::MatrixXd color;  // (H*W) x 3
    Eigen::MatrixXd depth;  // (H*W) x 1
    Eigen::MatrixXd mask;   // (H*W) x 1, 1 = contributes to the losses
    long mask_count = 0;
};

FrameData load_frame_data(const Frame& fr, int width, int height) {
    FrameData fd;
    Image img = load_png(fr.image_path);
    if (img.width != width || img.height != height)
        throw InputError("frame " + fr.image_path + ": image size does not match the manifest");
    Eigen::MatrixXd depth = load_pfm(fr.depth_path);
    if (depth.rows() != height || depth.cols() != width)
        throw InputError("frame " + fr.depth_path + ": depth size does not match the manifest");

    const int hw = width * height;
    fd.color.resize(hw, 3);
    fd.depth.resize(hw, 1);
    fd.mask = Eigen::MatrixXd::Ones(hw, 1);

    Image mask_img;
    bool has_mask = !fr.mask_path.empty();
    if (has_mask) {
        mask_img = load_png(fr.mask_path);
        if (mask_img.width != width || mask_img.height != height)
            throw InputError("frame " + fr.mask_path + ": mask size does not match the manifest");
    }

    for (int r = 0; r < height; ++r)
        for (int c = 0; c < width; ++c) {
            int p = r * width + c;
            for (int ch = 0; ch < 3; ++ch) fd.color(p, ch) = img.at(r, c, ch);
            double d = depth(r, c);
            bool depth_ok = std::isfinite(d) && d > 0;
            fd.depth(p, 0) = depth_ok ? d : 0.0;
            bool ignored = has_mask && mask_img.at(r, c, 0) > 0.5;  // white marks occlusions
            double m = (depth_ok && !ignored) ? 1.0 : 0.0;
            fd.mask(p, 0) = m;
            if (m > 0) ++fd.mask_count;
        }
    return fd;
}

struct LossParts {
    ad::Var total, color, depth, spatial, temporal;
};

}  // namespace

// ---- training loop ----

TrainResult train(const SceneDataset& scene, const TrainConfig& cfg, const std::string& mode,
                  const std::string& csv_path, const std::string& ckpt_path) {
    cfg.validate();
    if (mode != "full" && mode != "no_filters" && mode != "no_sad" && mode != "baseline")
        throw ConfigError("train: unknown mode '" + mode + "'");
    std::vector<int> train_idx = scene.train_indices();
    if (train_idx.empty()) throw InputError("train: scene has no training frames");
    {
        std::set<double> times;
        for (int i : train_idx) times.insert(scene.frames[static_cast<size_t>(i)].time);
        if (times.size() < 2) throw InputError("train: need at least 2 distinct timestamps");
    }

    const bool plain = (mode == "no_sad" || mode == "baseline");
    FilterConfig filt = cfg.filters;
    if (mode == "no_filters" || mode == "baseline") {
        filt.enable3d = false;
        filt.enable2d = false;
    }

    const int width = scene.width, height = scene.height;
    const int hw = width * height;
    const Eigen::Vector3d background(0, 0, 0);
    RenderConfig rcfg;
    rcfg.workers = cfg.workers;

    // initialization: back-projected depth points from a few training views
    std::vector<CameraModel> cams = train_cameras(scene);
    GaussianCloud cloud;
    {
        std::vector<Eigen::MatrixXd> pts, cols;
        long total = 0;
        int picks = std::min<int>(4, static_cast<int>(train_idx.size()));
        for (int k = 0; k < picks; ++k) {
            int fi = train_idx[static_cast<size_t>(k * train_idx.size() / picks)];
            const Frame& fr = scene.frames[static_cast<size_t>(fi)];
            Image img = load_png(fr.image_path);
            Eigen::MatrixXd depth = load_pfm(fr.depth_path);
            ColoredPoints cp = backproject_depth(fr.camera, depth, img.data, 2);
            total += cp.positions.rows();
            pts.push_back(std::move(cp.positions));
            cols.push_back(std::move(cp.colors));
        }
        if (total == 0) throw InputError("train: no valid depth samples to initialize from");
        Eigen::MatrixXd allp(total, 3), allc(total, 3);
        long at = 0;
        for (size_t k = 0; k < pts.size(); ++k) {
            allp.middleRows(at, pts[k].rows()) = pts[k];
            allc.middleRows(at, pts[k].rows()) = cols[k];
            at += pts[k].rows();
        }
        double frac = std::min(1.0, static_cast<double>(cfg.init_points) /
                                        static_cast<double>(total));
        cloud = init_from_points(allp, allc, frac, cfg.seed, cfg.sh_degree);
    }
    refresh_sampling_rates(cloud, cams);

    HexPlaneField field = make_hexplane(cfg.feature_dim, cfg.spatial_res, cfg.temporal_res,
                                        scene.aabb_min, scene.aabb_max, scene.t0, scene.t1,
                                        cfg.seed + 1);
    SadDecoder dec = SadDecoder::create(cfg.feature_dim, cfg.heads, cfg.seed + 2, plain);
    Eigen::MatrixXd gamma1_m = Eigen::MatrixXd::Constant(1, 1, dec.gamma1);
    Eigen::MatrixXd gamma2_m = Eigen::MatrixXd::Constant(1, 1, dec.gamma2);

    // preload frame targets
    std::map<int, FrameData> frame_cache;
    for (int i : train_idx)
        frame_cache.emplace(i, load_frame_data(scene.frames[static_cast<size_t>(i)], width, height));

    std::ofstream csv(csv_path, std::ios::trunc);
    if (!csv) throw InputError("train: cannot write metrics CSV " + csv_path);
    csv << "iter,loss,L_color,L_depth,L_spatial,L_temporal,psnr_train,wall_ms\n";

    Adam adam;
    Eigen::VectorXd grad_accum = Eigen::VectorXd::Zero(cloud.size());
    Eigen::VectorXd grad_count = Eigen::VectorXd::Zero(cloud.size());
    double final_psnr = 0;
    bool warned_empty_depth = false;

    auto make_checkpoint = [&](uint64_t iter) {
        Checkpoint c;
        c.kind = Checkpoint::Kind::learned;
        c.mode = mode;
        c.config_hash = config_hash(cfg, mode);
        c.iteration = iter;
        c.cloud = cloud;
        c.filters = filt;
        c.field = field;
        c.decoder = dec;
        c.adam = adam.slots;
        c.adam_step = adam.step;
        return c;
    };

    auto t_start = std::chrono::steady_clock::now();
    const int effective_warmup = std::min(cfg.warmup_iters, cfg.total_iters);

    for (int iter = 1; iter <= cfg.total_iters; ++iter) {
        const bool warmup = iter <= effective_warmup;
        const int slot = (iter - 1) % static_cast<int>(train_idx.size());
        const int fi = train_idx[static_cast<size_t>(slot)];
        const Frame& fr = scene.frames[static_cast<size_t>(fi)];
        const FrameData& fd = frame_cache.at(fi);
        const int prev_slot = (slot + static_cast<int>(train_idx.size()) - 1) %
                              static_cast<int>(train_idx.size());
        const double t_prev = scene.frames[static_cast<size_t>(train_idx[static_cast<size_t>(prev_slot)])].time;

        ad::Tape tape;
        CloudVars cv = register_cloud(tape, cloud, true);
        std::vector<ParamBinding> params;
        params.push_back({"cloud.positions", cv.positions, cfg.position_lr_mult,
                          [&] { return cloud.positions; },
                          [&](const Eigen::MatrixXd& m) { cloud.positions = m; }});
        params.push_back({"cloud.log_scales", cv.log_scales, 1.0,
                          [&] { return cloud.log_scales; },
                          [&](const Eigen::MatrixXd& m) { cloud.log_scales = m; }});
        params.push_back({"cloud.rotations", cv.rotations, 1.0,
                          [&] { return cloud.rotations; },
                          [&](const Eigen::MatrixXd& m) { cloud.rotations = m; }});
        params.push_back({"cloud.sh", cv.sh, 1.0, [&] { return cloud.sh_coeffs; },
                          [&](const Eigen::MatrixXd& m) { cloud.sh_coeffs = m; }});
        params.push_back({"cloud.logits", cv.logits, 1.0,
                          [&] { return Eigen::MatrixXd(cloud.opacity_logits); },
                          [&](const Eigen::MatrixXd& m) { cloud.opacity_logits = m; }});

        CloudVars deformed = cv;
        ad::Var dmu_t, dmu_prev;
        FieldVars fv;
        DecoderVars dv;
        if (!warmup) {
            dec.gamma1 = gamma1_m(0, 0);
            dec.gamma2 = gamma2_m(0, 0);
            fv = register_field(tape, field, true);
            dv = register_decoder(tape, dec, true);
            for (int p = 0; p < 6; ++p) {
                std::string name = "field.plane" + std::to_string(p);
                size_t sp = static_cast<size_t>(p);
                params.push_back({name, fv.planes[sp], 1.0,
                                  [&field, sp] { return field.planes[sp]; },
                                  [&field, sp](const Eigen::MatrixXd& m) { field.planes[sp] = m; }});
            }
            auto bind = [&](const std::string& name, ad::Var var, Eigen::MatrixXd* target) {
                params.push_back({name, var, 1.0, [target] { return *target; },
                                  [target](const Eigen::MatrixXd& m) { *target = m; }});
            };
            bind("dec.alpha_pre", dv.alpha_pre, &dec.alpha_pre);
            bind("dec.beta_pre", dv.beta_pre, &dec.beta_pre);
            bind("dec.alpha_post", dv.alpha_post, &dec.alpha_post);
            bind("dec.beta_post", dv.beta_post, &dec.beta_post);
            for (int k = 0; k < dec.heads; ++k) {
                size_t sk = static_cast<size_t>(k);
                bind("dec.wq" + std::to_string(k), dv.wq[sk], &dec.wq[sk]);
                bind("dec.wk" + std::to_string(k), dv.wk[sk], &dec.wk[sk]);
                bind("dec.wv" + std::to_string(k), dv.wv[sk], &dec.wv[sk]);
            }
            bind("dec.wo", dv.wo, &dec.wo);
            bind("dec.w1", dv.w1, &dec.w1);
            bind("dec.b1", dv.b1, &dec.b1);
            bind("dec.w2", dv.w2, &dec.w2);
            bind("dec.b2", dv.b2, &dec.b2);
            bind("dec.gamma1", dv.gamma1, &gamma1_m);
            bind("dec.gamma2", dv.gamma2, &gamma2_m);
            bind("dec.head_mu", dv.head_mu, &dec.head_mu);
            bind("dec.bias_mu", dv.bias_mu, &dec.bias_mu);
            bind("dec.head_scale", dv.head_scale, &dec.head_scale);
            bind("dec.bias_scale", dv.bias_scale, &dec.bias_scale);
            bind("dec.head_rot", dv.head_rot, &dec.head_rot);
            bind("dec.bias_rot", dv.bias_rot, &dec.bias_rot);
            bind("dec.head_sh", dv.head_sh, &dec.head_sh);
            bind("dec.bias_sh", dv.bias_sh, &dec.bias_sh);
            bind("dec.head_sigma", dv.head_sigma, &dec.head_sigma);
            bind("dec.bias_sigma", dv.bias_sigma, &dec.bias_sigma);
            bind("dec.p1", dv.p1, &dec.p1);
            bind("dec.pb1", dv.pb1, &dec.pb1);
            bind("dec.p2", dv.p2, &dec.p2);
            bind("dec.pb2", dv.pb2, &dec.pb2);

            DeformResult dr = deform_op(tape, cv, cloud, field, fv, dec, dv, fr.time);
            deformed = dr.deformed;
            dmu_t = dr.dmu;
            if (t_prev != fr.time && cfg.lambda4 > 0) {
                DeformResult drp = deform_op(tape, cv, cloud, field, fv, dec, dv, t_prev);
                dmu_prev = drp.dmu;
            }
        }

        PrepareResult prep =
            splat_prepare_op(tape, deformed.positions, deformed.log_scales, deformed.rotations,
                             deformed.sh, deformed.logits, fr.camera, filt,
                             cloud.max_sampling_rate, cloud.sh_degree);
        ad::Var pix = rasterize_op(tape, prep.packed, prep.valid, width, height, background, rcfg);

        LossParts lp;
        {
            ad::Var rgb = tape.cols(pix, 0, 3);
            ad::Var target = tape.constant(fd.color);
            lp.color = tape.mean(tape.abs(tape.sub(rgb, target)));

            if (fd.mask_count > 0) {
                ad::Var dacc = tape.cols(pix, 3, 1);
                ad::Var alpha = tape.cols(pix, 4, 1);
                ad::Var depth = tape.div(dacc, tape.cwise_max(alpha, 1e-6));
                ad::Var diff = tape.sub(depth, tape.constant(fd.depth));
                lp.depth = tape.scale(tape.sum(tape.abs(tape.mul(diff, tape.constant(fd.mask)))),
                                      1.0 / static_cast<double>(fd.mask_count));
            } else {
                if (!warned_empty_depth) {
                    std::cerr << "warning: frame has no valid depth pixels; depth loss disabled\n";
                    warned_empty_depth = true;
                }
                lp.depth = tape.scalar(0.0);
            }

            if (!warmup) {
                ad::Var tv;
                for (int p = 0; p < 6; ++p) {
                    auto [d1, d2] = field.resolution[static_cast<size_t>(p)];
                    ad::Var t = total_variation_op(tape, fv.planes[static_cast<size_t>(p)], d1, d2);
                    tv = tv.valid() ? tape.add(tv, t) : t;
                }
                lp.spatial = tape.scale(tv, 1.0 / 6.0);
                lp.temporal = dmu_prev.valid()
                                  ? tape.mean(tape.square(tape.sub(dmu_t, dmu_prev)))
                                  : tape.scalar(0.0);
            } else {
                lp.spatial = tape.scalar(0.0);
                lp.temporal = tape.scalar(0.0);
            }

            lp.total = tape.add(
                tape.add(tape.scale(lp.color, cfg.lambda1), tape.scale(lp.depth, cfg.lambda2)),
                tape.add(tape.scale(lp.spatial, cfg.lambda3),
                         tape.scale(lp.temporal, cfg.lambda4)));
        }

        double loss_v = tape.value(lp.total)(0, 0);
        if (!std::isfinite(loss_v)) {
            save_checkpoint(make_checkpoint(static_cast<uint64_t>(iter - 1)), ckpt_path);
            throw NumericalAbort("train: non-finite loss at iteration " + std::to_string(iter) +
                                 "; last-good checkpoint written to " + ckpt_path);
        }

        // training-view PSNR from the composited color
        {
            const Eigen::MatrixXd& pv = tape.value(pix);
            double mse = 0;
            for (int p = 0; p < hw; ++p)
                for (int ch = 0; ch < 3; ++ch) {
                    double d = pv(p, ch) - fd.color(p, ch);
                    mse += d * d;
                }
            mse /= static_cast<double>(hw) * 3.0;
            final_psnr = (mse == 0) ? 999.0 : 10.0 * std::log10(1.0 / mse);
        }

        tape.backward(lp.total);

        // screen-space position gradients drive densification
        {
            const Eigen::MatrixXd& gp = tape.grad(prep.packed);
            for (int i = 0; i < cloud.size(); ++i) {
                if (!prep.valid[static_cast<size_t>(i)]) continue;
                grad_accum(i) += std::hypot(gp(i, 0), gp(i, 1));
                grad_count(i) += 1;
            }
        }

        ++adam.step;
        for (const auto& p : params) {
            Eigen::MatrixXd value = p.get();
            Eigen::MatrixXd grad = tape.grad_ready(p.var)
                                       ? tape.grad(p.var)
                                       : Eigen::MatrixXd::Zero(value.rows(), value.cols());
            adam.update(p.name, value, grad, cfg.lr * p.lr_mult);
            p.set(value);
        }
        dec.gamma1 = gamma1_m(0, 0);
        dec.gamma2 = gamma2_m(0, 0);

        // densification / pruning schedule
        if (iter >= cfg.densify_start && iter <= cfg.densify_stop &&
            iter % cfg.densify_interval == 0) {
            Eigen::VectorXd avg = Eigen::VectorXd::Zero(cloud.size());
            for (int i = 0; i < cloud.size(); ++i)
                avg(i) = grad_count(i) > 0 ? grad_accum(i) / grad_count(i) : 0.0;
            DensifyConfig dcfg;
            DensifyResult dres = densify_and_prune(cloud, avg, dcfg,
                                                   cfg.seed + static_cast<uint64_t>(iter));
            cloud = std::move(dres.cloud);
            for (const char* n : {"cloud.positions", "cloud.log_scales", "cloud.rotations",
                                  "cloud.sh", "cloud.logits"})
                adam.remap_rows(n, dres.source_index);
            refresh_sampling_rates(cloud, cams);
            grad_accum = Eigen::VectorXd::Zero(cloud.size());
            grad_count = Eigen::VectorXd::Zero(cloud.size());
        }

        auto wall_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                           std::chrono::steady_clock::now() - t_start)
                           .count();
        char line[512];
        std::snprintf(line, sizeof(line), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%lld\n", iter,
                      loss_v, tape.value(lp.color)(0, 0), tape.value(lp.depth)(0, 0),
                      tape.value(lp.spatial)(0, 0), tape.value(lp.temporal)(0, 0), final_psnr,
                      static_cast<long long>(wall_ms));
        csv << line;

        if (iter % 200 == 0 || iter == cfg.total_iters)
            std::cerr << "iter " << iter << "/" << cfg.total_iters << " loss " << loss_v
                      << " psnr " << final_psnr << " n " << cloud.size() << "\n";
    }
    csv.flush();
    if (!csv) throw InputError("train: metrics CSV write failed");

    TrainResult res;
    res.checkpoint = make_checkpoint(static_cast<uint64_t>(cfg.total_iters));
    res.final_train_psnr = final_psnr;
    save_checkpoint(res.checkpoint, ckpt_path);
    return res;
}

// ---- evaluation and ablation ----

EvalReport evaluate(const Checkpoint& ckpt, const SceneDataset& scene,
                    const std::vector<int>& frame_indices, int workers) {
    if (frame_indices.empty()) throw InputError("eval: no frames selected");
    RenderConfig rcfg;
    rcfg.workers = workers;
    Eigen::Vector3d background(0, 0, 0);

    EvalReport rep;
    for (int fi : frame_indices) {
        const Frame& fr = scene.frames.at(static_cast<size_t>(fi));
        RenderOutput out = render_checkpoint(ckpt, fr.camera, fr.time, background, rcfg);
        Image gt = load_png(fr.image_path);
        if (gt.width != scene.width || gt.height != scene.height)
            throw InputError("eval: frame " + fr.image_path + " size mismatch");
        EvalRow row;
        row.frame = fi;
        row.psnr = psnr(out.color, gt.data).psnr;
        row.ssim = ssim_rgb(out.color, gt.data, scene.width, scene.height);
        rep.mean_psnr += row.psnr;
        rep.mean_ssim += row.ssim;
        rep.rows.push_back(row);
    }
    rep.mean_psnr /= static_cast<double>(rep.rows.size());
    rep.mean_ssim /= static_cast<double>(rep.rows.size());
    return rep;
}

std::vector<AblationRow> ablate(const SceneDataset& scene, const TrainConfig& cfg,
                                const std::string& out_dir) {
    fs::create_directories(out_dir);
    std::vector<int> test_idx = scene.test_indices();
    if (test_idx.empty()) throw InputError("ablate: scene has an empty test split");

    std::vector<AblationRow> table;
    for (const std::string mode : {"baseline", "no_filters", "no_sad", "full"}) {
        std::string csv = (fs::path(out_dir) / (mode + "_metrics.csv")).string();
        std::string ckpt = (fs::path(out_dir) / (mode + ".ckpt")).string();
        std::cerr << "ablate: training mode " << mode << "\n";
        TrainResult tr = train(scene, cfg, mode, csv, ckpt);
        EvalReport rep = evaluate(tr.checkpoint, scene, test_idx, cfg.workers);
        table.push_back({mode, rep.mean_psnr, rep.mean_ssim});
    }
    return table;
}

}  // namespace sags
