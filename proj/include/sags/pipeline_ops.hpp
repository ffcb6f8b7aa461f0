#pragma once

#include <Eigen/Dense>

#include "sags/antialias.hpp"
#include "sags/camera.hpp"
#include "sags/gaussian_cloud.hpp"
#include "sags/hexplane.hpp"
#include "sags/rasterizer.hpp"
#include "sags/tape.hpp"

namespace sags {

struct FieldVars;  // decoder.hpp

// N x h features: element-wise product of the six bilinear plane samples at
// each primitive's normalized (x, y, z, t).  Differentiable in the grids and
// in the positions.
ad::Var hexplane_encode_op(ad::Tape& tape, const std::array<ad::Var, 6>& planes,
                           ad::Var positions, const HexPlaneField& field, double t);

// Places x (N x n) into columns [at, at+n) of an N x total zero matrix.
ad::Var pad_cols_op(ad::Tape& tape, ad::Var x, int total, int at);

// Mean squared difference of neighboring texels along both grid axes.
ad::Var total_variation_op(ad::Tape& tape, ad::Var plane, int d1, int d2);

struct PrepareResult {
    ad::Var packed;             // N x kSplatCols
    std::vector<char> valid;    // in-frustum, non-singular
    long skipped_singular = 0;  // only possible with s2d = 0
};

// Full per-primitive chain: covariance build, 3D smoothing filter,
// EWA projection, 2D Mip filter, conic, SH color, effective opacity.
// v-hat is the cached per-primitive max sampling rate.
PrepareResult splat_prepare_op(ad::Tape& tape, ad::Var positions, ad::Var log_scales,
                               ad::Var rotations, ad::Var sh, ad::Var logits,
                               const CameraModel& cam, const FilterConfig& filt,
                               const Eigen::VectorXd& vhat, int sh_degree);

// (H*W) x 5 output: r, g, b, depth_acc, alpha.  Custom adjoint node around the
// tile rasterizer.
ad::Var rasterize_op(ad::Tape& tape, ad::Var packed, const std::vector<char>& valid, int width,
                     int height, const Eigen::Vector3d& background, const RenderConfig& cfg);

// Non-differentiating helper: evaluate the prepare chain for rendering.
struct PreparedSplats {
    Eigen::MatrixXd packed;
    std::vector<char> valid;
    long skipped_singular = 0;
};

PreparedSplats prepare_splats(const GaussianCloud& cloud, const CameraModel& cam,
                              const FilterConfig& filt);

}  // namespace sags
