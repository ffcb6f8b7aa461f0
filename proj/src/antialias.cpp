#include "sags/antialias.hpp"

#include <algorithm>
#include <cmath>

#include "sags/geometry.hpp"

namespace sags {

double max_sampling_rate(const std::vector<CameraModel>& cameras, const Eigen::Vector3d& mu) {
    if (cameras.empty()) throw ConfigError("max_sampling_rate: camera list is empty");
    double best = 0;
    double floor_rate = 0;
    for (const auto& cam : cameras) {
        double focal = std::max(cam.fx, cam.fy);
        floor_rate = std::max(floor_rate, focal / cam.far);
        Eigen::Vector3d p = cam.to_camera(mu);
        if (p.z() <= cam.near) continue;
        double u = cam.fx * p.x() / p.z() + cam.cx;
        double v = cam.fy * p.y() / p.z() + cam.cy;
        double mx = 0.15 * cam.width, my = 0.15 * cam.height;
        if (u < -mx || u > cam.width - 1 + mx || v < -my || v > cam.height - 1 + my) continue;
        best = std::max(best, focal / p.z());
    }
    return best > 0 ? best : floor_rate;
}

Filtered3 smooth_3d(const Eigen::Matrix3d& cov, double vhat, double s3d) {
    Filtered3 out;
    if (s3d == 0) {
        out.cov = cov;
        out.amplitude = 1.0;
        return out;
    }
    if (vhat <= 0) throw InputError("smooth_3d: sampling rate must be positive");
    double c = s3d / vhat;
    out.cov = cov + c * Eigen::Matrix3d::Identity();
    double num = std::max(cov.determinant(), 0.0);
    out.amplitude = std::sqrt(num / out.cov.determinant());
    return out;
}

Filtered2 mip_2d(const Eigen::Matrix2d& cov2d, double s2d) {
    Filtered2 out;
    if (s2d == 0) {
        out.cov = cov2d;
        out.amplitude = 1.0;
        return out;
    }
    out.cov = cov2d + s2d * Eigen::Matrix2d::Identity();
    double num = std::max(cov2d.determinant(), 0.0);
    out.amplitude = std::sqrt(num / out.cov.determinant());
    return out;
}

}  // namespace sags
