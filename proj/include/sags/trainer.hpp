#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sags/checkpoint.hpp"
#include "sags/dataset.hpp"
#include "sags/rasterizer.hpp"

namespace sags {

struct TrainConfig {
    double lambda1 = 1.0;   // color L1
    double lambda2 = 0.1;   // masked depth L1
    double lambda3 = 1e-4;  // grid total variation
    double lambda4 = 1e-3;  // delta-mu temporal smoothness
    double lr = 1.6e-3;
    double position_lr_mult = 0.1;
    int warmup_iters = 1000;
    int total_iters = 4000;
    int densify_interval = 500;
    int densify_start = 500;
    int densify_stop = 3000;
    uint64_t seed = 1;
    int workers = 1;
    FilterConfig filters;
    int feature_dim = 32;
    int heads = 4;
    int spatial_res = 16;
    int temporal_res = 8;
    int init_points = 2000;
    int sh_degree = 2;

    void validate() const;
};

TrainConfig load_train_config(const std::string& path);  // JSON key-value document
uint64_t config_hash(const TrainConfig& cfg, const std::string& mode);

// Renders a full frame from a checkpoint at time t (applies the stored
// deformation: learned field+decoder or analytic teacher motion).
RenderOutput render_checkpoint(const Checkpoint& ckpt, const CameraModel& cam, double t,
                               const Eigen::Vector3d& background, const RenderConfig& rcfg,
                               bool bruteforce = false);

struct TrainResult {
    Checkpoint checkpoint;
    double final_train_psnr = 0;
};

// mode: full | no_filters | no_sad | baseline.  Writes the metrics CSV
// (columns iter, loss, L_color, L_depth, L_spatial, L_temporal, psnr_train,
// wall_ms) alongside training.  Deterministic per seed with workers=1.
TrainResult train(const SceneDataset& scene, const TrainConfig& cfg, const std::string& mode,
                  const std::string& csv_path, const std::string& ckpt_path);

struct EvalRow {
    int frame = 0;
    double psnr = 0;
    double ssim = 0;
};

struct EvalReport {
    std::vector<EvalRow> rows;
    double mean_psnr = 0;
    double mean_ssim = 0;
};

EvalReport evaluate(const Checkpoint& ckpt, const SceneDataset& scene,
                    const std::vector<int>& frame_indices, int workers = 1);

struct AblationRow {
    std::string mode;
    double psnr = 0;
    double ssim = 0;
};

// Runs the four trainer modes with a shared seed and evaluates each on the
// test split.  Row order: baseline, no_filters, no_sad, full.
std::vector<AblationRow> ablate(const SceneDataset& scene, const TrainConfig& cfg,
                                const std::string& out_dir);

}  // namespace sags
