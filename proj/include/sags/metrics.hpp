#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sags/errors.hpp"

namespace sags {

// 10 log10(peak^2 / MSE) over flattened buffers.  Identical inputs report
// `infinite = true` and a very large finite psnr for tabulation.
struct PsnrResult {
    double psnr = 0;
    double mse = 0;
    bool infinite = false;
};

PsnrResult psnr(const std::vector<double>& a, const std::vector<double>& b, double peak = 1.0);

// Mean structural similarity over valid 11x11 windows (Gaussian weights,
// sigma 1.5, C1 = 0.01^2, C2 = 0.03^2, dynamic range = peak).  Inputs are
// H x W single-channel; RGB callers average the per-channel scores.
double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double peak = 1.0);

// Channel-averaged SSIM over H*W*3 buffers.
double ssim_rgb(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
                double peak = 1.0);

}  // namespace sags
