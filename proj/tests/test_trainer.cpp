#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "doctest.h"
#include "sags/trainer.hpp"

using namespace sags;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const char* tag) {
        path = fs::temp_directory_path() / (std::string("sags_tr_") + tag + "_" +
                                            std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const char* name) const { return (path / name).string(); }
};

Checkpoint sample_checkpoint(uint64_t seed) {
    Checkpoint c;
    c.kind = Checkpoint::Kind::learned;
    c.mode = "full";
    c.config_hash = 0xabcdef01;
    c.iteration = 123;

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    const int n = 7;
    c.cloud.sh_degree = 1;
    c.cloud.positions.resize(n, 3);
    c.cloud.log_scales.resize(n, 3);
    c.cloud.rotations.resize(n, 4);
    c.cloud.sh_coeffs.resize(n, 12);
    c.cloud.opacity_logits.resize(n);
    c.cloud.max_sampling_rate.resize(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < 3; ++j) c.cloud.positions(i, j) = u(rng) * 0.4;
        for (int j = 0; j < 3; ++j) c.cloud.log_scales(i, j) = -2 + 0.2 * u(rng);
        for (int j = 0; j < 4; ++j) c.cloud.rotations(i, j) = u(rng);
        c.cloud.rotations(i, 0) += 1.5;
        for (int j = 0; j < 12; ++j) c.cloud.sh_coeffs(i, j) = 0.3 * u(rng);
        c.cloud.opacity_logits(i) = u(rng);
        c.cloud.max_sampling_rate(i) = 30 + 10 * u(rng);
    }
    c.filters.s3d = 0.25;
    c.filters.s2d = 0.15;
    c.field = make_hexplane(8, 5, 4, {-1, -1, -1}, {1, 1, 1}, 0, 1, seed + 1);
    c.decoder = SadDecoder::create(8, 2, seed + 2);
    c.decoder.gamma1 = 0.01;
    c.adam["cloud.positions"] = {Eigen::MatrixXd::Random(n, 3), Eigen::MatrixXd::Random(n, 3)};
    c.adam_step = 55;
    return c;
}

bool cloud_equal(const GaussianCloud& a, const GaussianCloud& b) {
    return a.sh_degree == b.sh_degree && a.positions == b.positions &&
           a.log_scales == b.log_scales && a.rotations == b.rotations &&
           a.sh_coeffs == b.sh_coeffs && a.opacity_logits == b.opacity_logits &&
           a.max_sampling_rate == b.max_sampling_rate;
}

SceneDataset tiny_scene(const fs::path& dir, uint64_t seed) {
    SyntheticSpec spec;
    spec.frame_count = 6;
    spec.width = 24;
    spec.height = 24;
    spec.teacher_count = 30;
    spec.motion_amplitude = 0.05;
    spec.seed = seed;
    return generate_synthetic(spec, dir.string()).dataset;
}

TrainConfig tiny_config() {
    TrainConfig cfg;
    cfg.warmup_iters = 8;
    cfg.total_iters = 20;
    cfg.densify_interval = 10;
    cfg.densify_start = 10;
    cfg.densify_stop = 15;
    cfg.init_points = 60;
    cfg.feature_dim = 8;
    cfg.heads = 2;
    cfg.spatial_res = 6;
    cfg.temporal_res = 4;
    cfg.sh_degree = 1;
    cfg.seed = 5;
    return cfg;
}

// reads a metrics CSV and strips the wall-clock column
std::vector<std::string> csv_without_wall(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in.good());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        size_t cut = line.rfind(',');
        REQUIRE(cut != std::string::npos);
        lines.push_back(line.substr(0, cut));
    }
    return lines;
}

}  // namespace

TEST_CASE("train config validation") {
    TrainConfig cfg;
    cfg.validate();
    cfg.lr = -1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.lr = 0;  // no-op training is allowed
    cfg.validate();
    cfg = TrainConfig{};
    cfg.warmup_iters = 10;
    cfg.total_iters = 5;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg.total_iters = 0;  // init-only runs skip the warmup check
    cfg.validate();
    cfg = TrainConfig{};
    cfg.lambda2 = -0.1;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
    cfg = TrainConfig{};
    cfg.feature_dim = 6;
    cfg.heads = 4;
    CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("train config file parsing") {
    TempDir dir("cfg");
    std::ofstream(dir.str("c.json"))
        << R"({"lr": 0.002, "total_iters": 100, "warmup_iters": 10, "s3d": 0.3})";
    TrainConfig cfg = load_train_config(dir.str("c.json"));
    CHECK(cfg.lr == 0.002);
    CHECK(cfg.total_iters == 100);
    CHECK(cfg.warmup_iters == 10);
    CHECK(cfg.filters.s3d == 0.3);
    CHECK(cfg.lambda1 == 1.0);  // untouched default

    std::ofstream(dir.str("unk.json")) << R"({"learning_rate": 0.1})";
    CHECK_THROWS_AS(load_train_config(dir.str("unk.json")), ConfigError);
    std::ofstream(dir.str("bad.json")) << "{";
    CHECK_THROWS_AS(load_train_config(dir.str("bad.json")), ConfigError);
    CHECK_THROWS_AS(load_train_config(dir.str("absent.json")), InputError);
}

TEST_CASE("config hash separates configs and modes") {
    TrainConfig a, b;
    CHECK(config_hash(a, "full") == config_hash(b, "full"));
    CHECK(config_hash(a, "full") != config_hash(a, "no_sad"));
    b.lr *= 2;
    CHECK(config_hash(a, "full") != config_hash(b, "full"));
}

TEST_CASE("checkpoint round-trip preserves every section") {
    TempDir dir("ck");
    Checkpoint c = sample_checkpoint(9);
    save_checkpoint(c, dir.str("m.ckpt"));
    Checkpoint r = load_checkpoint(dir.str("m.ckpt"));

    CHECK(r.kind == Checkpoint::Kind::learned);
    CHECK(r.mode == "full");
    CHECK(r.config_hash == c.config_hash);
    CHECK(r.iteration == 123);
    CHECK(cloud_equal(r.cloud, c.cloud));
    CHECK(r.filters.s3d == c.filters.s3d);
    CHECK(r.filters.s2d == c.filters.s2d);
    for (int p = 0; p < 6; ++p)
        CHECK(r.field.planes[static_cast<size_t>(p)] == c.field.planes[static_cast<size_t>(p)]);
    CHECK(r.decoder.wo == c.decoder.wo);
    CHECK(r.decoder.gamma1 == c.decoder.gamma1);
    CHECK(r.decoder.head_mu == c.decoder.head_mu);
    CHECK(r.adam_step == 55);
    REQUIRE(r.adam.count("cloud.positions") == 1);
    CHECK(r.adam.at("cloud.positions").first == c.adam.at("cloud.positions").first);
    CHECK(r.adam.at("cloud.positions").second == c.adam.at("cloud.positions").second);
}

TEST_CASE("analytic checkpoint round-trip") {
    TempDir dir("teach");
    Checkpoint c = sample_checkpoint(13);
    c.kind = Checkpoint::Kind::analytic;
    c.mode = "teacher";
    const int n = c.cloud.size();
    c.motion.amplitude = Eigen::MatrixXd::Random(n, 3) * 0.05;
    c.motion.frequency = Eigen::VectorXd::Constant(n, 1.0);
    c.motion.phase = Eigen::VectorXd::Random(n);
    save_checkpoint(c, dir.str("t.ckpt"));
    Checkpoint r = load_checkpoint(dir.str("t.ckpt"));
    CHECK(r.kind == Checkpoint::Kind::analytic);
    CHECK(r.mode == "teacher");
    CHECK(r.motion.amplitude == c.motion.amplitude);
    CHECK(r.motion.frequency == c.motion.frequency);
    CHECK(r.motion.phase == c.motion.phase);
}

TEST_CASE("truncated checkpoints name the failing section") {
    TempDir dir("trunc");
    Checkpoint c = sample_checkpoint(17);
    save_checkpoint(c, dir.str("m.ckpt"));
    auto size = fs::file_size(dir.str("m.ckpt"));
    fs::copy_file(dir.str("m.ckpt"), dir.str("cut.ckpt"));
    fs::resize_file(dir.str("cut.ckpt"), size - 40);
    CHECK_THROWS_AS(load_checkpoint(dir.str("cut.ckpt")), InputError);

    fs::copy_file(dir.str("m.ckpt"), dir.str("head.ckpt"));
    fs::resize_file(dir.str("head.ckpt"), 10);
    CHECK_THROWS_AS(load_checkpoint(dir.str("head.ckpt")), InputError);

    std::ofstream(dir.str("junk.ckpt"), std::ios::binary) << "WRONGMAGICxxxxxxxx";
    CHECK_THROWS_AS(load_checkpoint(dir.str("junk.ckpt")), InputError);
    CHECK_THROWS_AS(load_checkpoint(dir.str("absent.ckpt")), InputError);
}

TEST_CASE("mode guard with compatibility override") {
    TempDir dir("mode");
    Checkpoint c = sample_checkpoint(19);
    c.mode = "no_sad";
    save_checkpoint(c, dir.str("m.ckpt"));
    CHECK_THROWS_AS(load_checkpoint(dir.str("m.ckpt"), "full"), ConfigError);
    Checkpoint r = load_checkpoint(dir.str("m.ckpt"), "full", true);
    CHECK(r.mode == "no_sad");
    load_checkpoint(dir.str("m.ckpt"), "no_sad");  // matching mode is fine
    load_checkpoint(dir.str("m.ckpt"));            // no expectation is fine
}

TEST_CASE("training smoke run reduces the loss") {
    TempDir dir("run");
    SceneDataset scene = tiny_scene(dir.path / "scene", 3);
    TrainConfig cfg = tiny_config();
    cfg.total_iters = 60;
    cfg.warmup_iters = 20;
    cfg.densify_start = 25;
    cfg.densify_stop = 40;

    TrainResult res = train(scene, cfg, "full", dir.str("m.csv"), dir.str("m.ckpt"));
    CHECK(res.checkpoint.iteration == 60);
    CHECK(fs::exists(dir.str("m.ckpt")));

    std::ifstream in(dir.str("m.csv"));
    std::string header;
    std::getline(in, header);
    CHECK(header == "iter,loss,L_color,L_depth,L_spatial,L_temporal,psnr_train,wall_ms");
    std::vector<double> losses;
    std::string line;
    while (std::getline(in, line)) {
        std::stringstream ss(line);
        std::string iter, loss;
        std::getline(ss, iter, ',');
        std::getline(ss, loss, ',');
        losses.push_back(std::stod(loss));
    }
    REQUIRE(losses.size() == 60);
    double head = 0, tail = 0;
    for (int i = 0; i < 10; ++i) {
        head += losses[static_cast<size_t>(i)];
        tail += losses[losses.size() - 1 - static_cast<size_t>(i)];
    }
    CHECK(tail < head);

    // the saved checkpoint renders the same image as the returned one
    const Frame& f = scene.frames[1];
    RenderConfig rcfg;
    Checkpoint loaded = load_checkpoint(dir.str("m.ckpt"));
    RenderOutput a = render_checkpoint(res.checkpoint, f.camera, f.time, {0, 0, 0}, rcfg);
    RenderOutput b = render_checkpoint(loaded, f.camera, f.time, {0, 0, 0}, rcfg);
    for (size_t i = 0; i < a.color.size(); ++i) CHECK(std::abs(a.color[i] - b.color[i]) <= 1e-9);
}

TEST_CASE("training is deterministic aside from wall time") {
    TempDir dir("det");
    SceneDataset scene = tiny_scene(dir.path / "scene", 5);
    TrainConfig cfg = tiny_config();
    train(scene, cfg, "full", dir.str("a.csv"), dir.str("a.ckpt"));
    train(scene, cfg, "full", dir.str("b.csv"), dir.str("b.ckpt"));
    CHECK(csv_without_wall(dir.str("a.csv")) == csv_without_wall(dir.str("b.csv")));

    cfg.seed += 1;
    train(scene, cfg, "full", dir.str("c.csv"), dir.str("c.ckpt"));
    CHECK(csv_without_wall(dir.str("a.csv")) != csv_without_wall(dir.str("c.csv")));
}

TEST_CASE("zero learning rate leaves parameters fixed") {
    TempDir dir("lr0");
    SceneDataset scene = tiny_scene(dir.path / "scene", 7);
    TrainConfig cfg = tiny_config();
    cfg.lr = 0;
    cfg.total_iters = 6;
    cfg.warmup_iters = 3;
    cfg.densify_start = 1000;  // never densify

    TrainConfig init_cfg = cfg;
    init_cfg.total_iters = 0;
    init_cfg.warmup_iters = 0;
    TrainResult init = train(scene, init_cfg, "full", dir.str("i.csv"), dir.str("i.ckpt"));
    TrainResult res = train(scene, cfg, "full", dir.str("m.csv"), dir.str("m.ckpt"));
    CHECK(cloud_equal(res.checkpoint.cloud, init.checkpoint.cloud));
    for (int p = 0; p < 6; ++p)
        CHECK(res.checkpoint.field.planes[static_cast<size_t>(p)] ==
              init.checkpoint.field.planes[static_cast<size_t>(p)]);
    CHECK(res.checkpoint.decoder.wo == init.checkpoint.decoder.wo);
}

TEST_CASE("trainer mode validation") {
    TempDir dir("badmode");
    SceneDataset scene = tiny_scene(dir.path / "scene", 9);
    TrainConfig cfg = tiny_config();
    CHECK_THROWS_AS(train(scene, cfg, "turbo", dir.str("x.csv"), dir.str("x.ckpt")), ConfigError);
}

TEST_CASE("evaluation reports per-frame and mean scores") {
    TempDir dir("eval");
    SceneDataset scene = tiny_scene(dir.path / "scene", 11);
    TrainConfig cfg = tiny_config();
    TrainResult res = train(scene, cfg, "full", dir.str("m.csv"), dir.str("m.ckpt"));

    std::vector<int> idx = {0, 2};
    EvalReport rep = evaluate(res.checkpoint, scene, idx);
    REQUIRE(rep.rows.size() == 2);
    CHECK(rep.rows[0].frame == 0);
    CHECK(rep.rows[1].frame == 2);
    double mp = (rep.rows[0].psnr + rep.rows[1].psnr) / 2;
    CHECK(rep.mean_psnr == doctest::Approx(mp).epsilon(1e-12));
    CHECK(rep.mean_ssim <= 1.0);
    CHECK(rep.rows[0].psnr > 3.0);  // renders something plausible
}
