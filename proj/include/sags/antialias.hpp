#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sags/camera.hpp"

namespace sags {

struct FilterConfig {
    double s3d = 0.2;   // dimensionless, scales 1/v-hat
    double s2d = 0.1;   // pixels^2
    bool enable3d = true;
    bool enable2d = true;

    void validate() const {
        if (s3d < 0 || s2d < 0) throw ConfigError("filter: sizes must be non-negative");
    }
};

// Highest focal/depth ratio over training cameras that see the point
// (15% border margin).  Falls back to focal/far when visible in none.
double max_sampling_rate(const std::vector<CameraModel>& cameras, const Eigen::Vector3d& mu);

struct Filtered3 {
    Eigen::Matrix3d cov;
    double amplitude;  // in (0, 1]
};

struct Filtered2 {
    Eigen::Matrix2d cov;
    double amplitude;
};

// Low-pass: cov + (s3d / v-hat) I, amplitude sqrt(|cov| / |cov'|).
Filtered3 smooth_3d(const Eigen::Matrix3d& cov, double vhat, double s3d);

// Screen-space dilation: cov2d + s2d I with compensating amplitude.
Filtered2 mip_2d(const Eigen::Matrix2d& cov2d, double s2d);

}  // namespace sags
