#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "sags/dataset.hpp"
#include "sags/image.hpp"
#include "sags/metrics.hpp"
#include "sags/trainer.hpp"

namespace fs = std::filesystem;
using namespace sags;

namespace {

std::vector<int> parse_frame_list(const std::string& list, int frame_count) {
    std::vector<int> out;
    if (list.empty() || list == "all") {
        for (int i = 0; i < frame_count; ++i) out.push_back(i);
        return out;
    }
    std::stringstream ss(list);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        size_t pos = 0;
        int v = std::stoi(tok, &pos);
        if (pos != tok.size()) throw ConfigError("render: bad frame index '" + tok + "'");
        if (v < 0 || v >= frame_count)
            throw InputError("render: frame index " + std::to_string(v) + " out of range [0, " +
                             std::to_string(frame_count) + ")");
        out.push_back(v);
    }
    if (out.empty()) throw ConfigError("render: empty frame list");
    return out;
}

std::string frame_name(int i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%05d", i);
    return buf;
}

int run(int argc, char** argv) {
    CLI::App app{"Dynamic Gaussian splatting pipeline: synthesize, train, render, evaluate"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dynamic scene");
    std::string synth_spec, synth_out;
    int64_t synth_seed = -1;
    synth->add_option("--spec", synth_spec, "Scene spec JSON (optional; defaults used otherwise)");
    synth->add_option("--out", synth_out, "Output scene directory")->required();
    synth->add_option("--seed", synth_seed, "Override the spec seed");

    // train
    auto* train_cmd = app.add_subcommand("train", "Optimize a model on a scene");
    std::string tr_scene, tr_config, tr_out, tr_csv, tr_mode = "full";
    int64_t tr_seed = -1, tr_total = -1;
    int tr_workers = 0;
    train_cmd->add_option("--scene", tr_scene, "Scene directory")->required();
    train_cmd->add_option("--config", tr_config, "Train config JSON (optional)");
    train_cmd->add_option("--out", tr_out, "Output checkpoint path")->required();
    train_cmd->add_option("--csv", tr_csv, "Metrics CSV path (default: <out>.metrics.csv)");
    train_cmd->add_option("--mode", tr_mode, "full | no_filters | no_sad | baseline");
    train_cmd->add_option("--seed", tr_seed, "Override config seed");
    train_cmd->add_option("--workers", tr_workers, "Override worker count");
    train_cmd->add_option("--total-iters", tr_total, "Override total iteration count");

    // render
    auto* render_cmd = app.add_subcommand("render", "Render frames from a checkpoint");
    std::string rd_ckpt, rd_scene, rd_frames = "all", rd_out, rd_expect_mode;
    bool rd_no_filters = false, rd_allow_mismatch = false;
    int rd_workers = 1;
    render_cmd->add_option("--ckpt", rd_ckpt, "Checkpoint path")->required();
    render_cmd->add_option("--scene", rd_scene, "Scene directory (cameras + timestamps)")
        ->required();
    render_cmd->add_option("--frames", rd_frames, "Comma-separated indices or 'all'");
    render_cmd->add_option("--out", rd_out, "Output directory")->required();
    render_cmd->add_flag("--no-filters", rd_no_filters, "Disable both anti-aliasing filters");
    render_cmd->add_option("--expect-mode", rd_expect_mode, "Require this checkpoint mode");
    render_cmd->add_flag("--allow-mode-mismatch", rd_allow_mismatch,
                         "Accept a checkpoint whose mode differs from --expect-mode");
    render_cmd->add_option("--workers", rd_workers, "Raster worker threads");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    std::string ev_ckpt, ev_scene, ev_split = "test", ev_out;
    int ev_workers = 1;
    eval_cmd->add_option("--ckpt", ev_ckpt, "Checkpoint path")->required();
    eval_cmd->add_option("--scene", ev_scene, "Scene directory")->required();
    eval_cmd->add_option("--split", ev_split, "test | train | all");
    eval_cmd->add_option("--out", ev_out, "Metrics CSV path (default: stdout only)");
    eval_cmd->add_option("--workers", ev_workers, "Raster worker threads");

    // ablate
    auto* ablate_cmd = app.add_subcommand("ablate", "Train and evaluate the four module modes");
    std::string ab_scene, ab_config, ab_out;
    int64_t ab_seed = -1;
    int ab_workers = 0;
    ablate_cmd->add_option("--scene", ab_scene, "Scene directory")->required();
    ablate_cmd->add_option("--config", ab_config, "Train config JSON (optional)");
    ablate_cmd->add_option("--out", ab_out, "Output directory")->required();
    ablate_cmd->add_option("--seed", ab_seed, "Override config seed");
    ablate_cmd->add_option("--workers", ab_workers, "Override worker count");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;  // usage errors are exit 2
    }

    if (synth->parsed()) {
        SyntheticSpec spec;
        if (!synth_spec.empty()) spec = load_synthetic_spec(synth_spec);
        if (synth_seed >= 0) spec.seed = static_cast<uint64_t>(synth_seed);
        SyntheticResult res = generate_synthetic(spec, synth_out);
        std::printf("frames %d\n", static_cast<int>(res.dataset.frames.size()));
        std::printf("aabb_min %g %g %g\n", res.dataset.aabb_min(0), res.dataset.aabb_min(1),
                    res.dataset.aabb_min(2));
        std::printf("aabb_max %g %g %g\n", res.dataset.aabb_max(0), res.dataset.aabb_max(1),
                    res.dataset.aabb_max(2));
        std::printf("teacher %s\n", res.teacher_checkpoint.c_str());
        return 0;
    }

    if (train_cmd->parsed()) {
        TrainConfig cfg;
        if (!tr_config.empty()) cfg = load_train_config(tr_config);
        if (tr_seed >= 0) cfg.seed = static_cast<uint64_t>(tr_seed);
        if (tr_workers > 0) cfg.workers = tr_workers;
        if (tr_total >= 0) cfg.total_iters = static_cast<int>(tr_total);
        cfg.validate();
        SceneDataset scene = load_scene(tr_scene);
        std::string csv = tr_csv.empty() ? tr_out + ".metrics.csv" : tr_csv;
        TrainResult res = train(scene, cfg, tr_mode, csv, tr_out);
        std::printf("final_train_psnr %.6f\n", res.final_train_psnr);
        return 0;
    }

    if (render_cmd->parsed()) {
        SceneDataset scene = load_scene(rd_scene);
        Checkpoint ckpt = load_checkpoint(rd_ckpt, rd_expect_mode, rd_allow_mismatch);
        if (rd_no_filters) {
            ckpt.filters.enable3d = false;
            ckpt.filters.enable2d = false;
        }
        std::vector<int> frames = parse_frame_list(rd_frames,
                                                   static_cast<int>(scene.frames.size()));
        fs::create_directories(rd_out);
        RenderConfig rcfg;
        rcfg.workers = rd_workers;
        Eigen::Vector3d background(0, 0, 0);
        for (int fi : frames) {
            const Frame& fr = scene.frames[static_cast<size_t>(fi)];
            RenderOutput out = render_checkpoint(ckpt, fr.camera, fr.time, background, rcfg);
            Image img;
            img.width = scene.width;
            img.height = scene.height;
            img.data = out.color;
            save_png(img, (fs::path(rd_out) / (frame_name(fi) + ".png")).string());
            Eigen::MatrixXd depth(scene.height, scene.width);
            for (int r = 0; r < scene.height; ++r)
                for (int c = 0; c < scene.width; ++c)
                    depth(r, c) = out.depth[static_cast<size_t>(r) * scene.width + c];
            save_pfm(depth, (fs::path(rd_out) / (frame_name(fi) + ".pfm")).string());
            std::cerr << "rendered frame " << fi << "\n";
        }
        return 0;
    }

    if (eval_cmd->parsed()) {
        SceneDataset scene = load_scene(ev_scene);
        Checkpoint ckpt = load_checkpoint(ev_ckpt);
        std::vector<int> idx;
        if (ev_split == "test")
            idx = scene.test_indices();
        else if (ev_split == "train")
            idx = scene.train_indices();
        else if (ev_split == "all")
            for (int i = 0; i < static_cast<int>(scene.frames.size()); ++i) idx.push_back(i);
        else
            throw ConfigError("eval: unknown split '" + ev_split + "'");
        if (idx.empty()) throw InputError("eval: selected split is empty");

        EvalReport rep = evaluate(ckpt, scene, idx, ev_workers);
        std::string csv_text = "frame,psnr,ssim\n";
        for (const auto& r : rep.rows) {
            char line[128];
            std::snprintf(line, sizeof(line), "%d,%.17g,%.17g\n", r.frame, r.psnr, r.ssim);
            csv_text += line;
        }
        if (!ev_out.empty()) {
            std::ofstream f(ev_out, std::ios::trunc);
            f << csv_text;
            if (!f) throw InputError("eval: cannot write " + ev_out);
        }
        std::fputs(csv_text.c_str(), stdout);
        std::printf("mean psnr %.6f ssim %.6f lpips n/a\n", rep.mean_psnr, rep.mean_ssim);
        return 0;
    }

    if (ablate_cmd->parsed()) {
        TrainConfig cfg;
        if (!ab_config.empty()) cfg = load_train_config(ab_config);
        if (ab_seed >= 0) cfg.seed = static_cast<uint64_t>(ab_seed);
        if (ab_workers > 0) cfg.workers = ab_workers;
        cfg.validate();
        SceneDataset scene = load_scene(ab_scene);
        std::vector<AblationRow> table = ablate(scene, cfg, ab_out);

        std::string csv_text = "mode,psnr,ssim,lpips\n";
        for (const auto& row : table) {
            char line[160];
            std::snprintf(line, sizeof(line), "%s,%.17g,%.17g,n/a\n", row.mode.c_str(), row.psnr,
                          row.ssim);
            csv_text += line;
        }
        std::ofstream f(fs::path(ab_out) / "ablation.csv", std::ios::trunc);
        f << csv_text;
        if (!f) throw InputError("ablate: cannot write ablation.csv");
        std::fputs(csv_text.c_str(), stdout);
        return 0;
    }

    return 2;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const NumericalAbort& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
