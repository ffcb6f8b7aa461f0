#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sags/errors.hpp"

namespace sags {

// A primitive ready for compositing: projected mean, Mip-filtered 2D
// covariance, SH-evaluated color, effective opacity (sigma * amplitudes),
// camera-space depth.
struct SplatView {
    Eigen::Vector2d mean;
    Eigen::Matrix2d cov;
    Eigen::Vector3d color;
    double opacity = 0;
    double z = 0;
};

struct RenderConfig {
    int tile_size = 16;
    double alpha_clamp = 0.99;
    double transmittance_eps = 1e-4;  // early-stop threshold; <= 0 disables
    double sigma_cutoff = 3.0;        // Gaussian evaluated only within this many sigmas
    bool early_stop = true;
    int workers = 1;
};

struct RenderOutput {
    int width = 0, height = 0;
    std::vector<double> color;      // H*W*3, background-composited
    std::vector<double> depth;      // H*W, alpha-weighted expected depth (0 where alpha ~ 0)
    std::vector<double> alpha;      // H*W
    std::vector<double> depth_acc;  // H*W, un-normalized sum z_i alpha_i T_i
    long skipped_singular = 0;      // debug counter: primitives with singular 2D covariance
};

RenderOutput render(const std::vector<SplatView>& splats, int width, int height,
                    const Eigen::Vector3d& background, const RenderConfig& cfg);

// Identical math, no tiling, no early termination.  Test oracle.
RenderOutput render_bruteforce(const std::vector<SplatView>& splats, int width, int height,
                               const Eigen::Vector3d& background, const RenderConfig& cfg);

// ---- array form used by the differentiable pipeline ----
// packed row layout: u, v, conic_a, conic_b, conic_c, r, g, b, opacity, z
constexpr int kSplatCols = 10;

struct RasterForward {
    RenderOutput out;
    std::vector<int> order;  // depth-sorted indices of composited splats
};

RasterForward raster_forward(const Eigen::MatrixXd& packed, const std::vector<char>& valid,
                             int width, int height, const Eigen::Vector3d& background,
                             const RenderConfig& cfg, bool tiled);

// Adjoint of raster_forward.  grad_color is H*W*3, grad_depth_acc and
// grad_alpha are H*W.  Returns an N x kSplatCols gradient matrix.
Eigen::MatrixXd raster_backward(const Eigen::MatrixXd& packed, const std::vector<char>& valid,
                                int width, int height, const Eigen::Vector3d& background,
                                const RenderConfig& cfg, const std::vector<double>& grad_color,
                                const std::vector<double>& grad_depth_acc,
                                const std::vector<double>& grad_alpha);

}  // namespace sags
