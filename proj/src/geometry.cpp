#include "sags/geometry.hpp"

#include <cmath>

namespace sags {

Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scales, const UnitQuaternion& rotation) {
    if (!(scales.array() > 0).all())
        throw InputError("build_covariance: scales must be strictly positive");
    Eigen::Matrix3d r = quat_to_rotation(rotation);
    Eigen::Matrix3d m = r * scales.asDiagonal();
    return m * m.transpose();
}

ProjectedPoint project_point(const CameraModel& cam, const Eigen::Vector3d& mu_world) {
    Eigen::Vector3d p = cam.to_camera(mu_world);
    ProjectedPoint out;
    out.z = p.z();
    if (p.z() <= cam.near) return out;  // behind-camera: culled
    out.u = cam.fx * p.x() / p.z() + cam.cx;
    out.v = cam.fy * p.y() / p.z() + cam.cy;
    out.in_front = true;
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& cam, const Eigen::Vector3d& p_cam) {
    const double x = p_cam.x(), y = p_cam.y(), z = p_cam.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0, -cam.fx * x / (z * z),
         0, cam.fy / z, -cam.fy * y / (z * z);
    return j;
}

ProjectedCovariance project_covariance(const CameraModel& cam, const Eigen::Matrix3d& cov_world,
                                       const Eigen::Vector3d& mu_world) {
    ProjectedCovariance out;
    Eigen::Vector3d p = cam.to_camera(mu_world);
    if (p.z() <= cam.near) return out;
    Eigen::Matrix<double, 2, 3> t = projection_jacobian(cam, p) * cam.rotation;
    out.cov = t * cov_world * t.transpose();
    out.in_front = true;
    return out;
}

ColoredPoints backproject_depth(const CameraModel& cam, const Eigen::MatrixXd& depth,
                                const std::vector<double>& color, int stride) {
    if (stride < 1) throw InputError("backproject_depth: stride must be >= 1");
    const int h = static_cast<int>(depth.rows());
    const int w = static_cast<int>(depth.cols());
    if (h != cam.height || w != cam.width)
        throw InputError("backproject_depth: depth dimensions do not match the camera");
    if (color.size() != static_cast<size_t>(h) * w * 3)
        throw InputError("backproject_depth: color buffer size does not match the depth map");

    Eigen::Matrix3d r_inv = cam.rotation.transpose();
    std::vector<Eigen::Vector3d> pts, cols;
    for (int row = 0; row < h; row += stride) {
        for (int col = 0; col < w; col += stride) {
            double d = depth(row, col);
            if (!std::isfinite(d) || d <= 0) continue;
            Eigen::Vector3d p_cam(d * (col - cam.cx) / cam.fx, d * (row - cam.cy) / cam.fy, d);
            pts.push_back(r_inv * (p_cam - cam.translation));
            size_t base = (static_cast<size_t>(row) * w + col) * 3;
            cols.emplace_back(color[base], color[base + 1], color[base + 2]);
        }
    }

    ColoredPoints out;
    out.positions.resize(static_cast<Eigen::Index>(pts.size()), 3);
    out.colors.resize(static_cast<Eigen::Index>(pts.size()), 3);
    for (size_t i = 0; i < pts.size(); ++i) {
        out.positions.row(static_cast<Eigen::Index>(i)) = pts[i];
        out.colors.row(static_cast<Eigen::Index>(i)) = cols[i];
    }
    return out;
}

}  // namespace sags
