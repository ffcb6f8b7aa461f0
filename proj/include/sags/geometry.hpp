#pragma once

#include <Eigen/Dense>
#include <vector>

#include "sags/camera.hpp"
#include "sags/quaternion.hpp"

namespace sags {

struct ProjectedPoint {
    double u = 0, v = 0;
    double z = 0;             // camera-space depth
    bool in_front = false;    // false => culled (z <= near), not an error
};

struct ProjectedCovariance {
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    bool in_front = false;
};

// Sigma = R S S^T R^T with S = diag(scales).
Eigen::Matrix3d build_covariance(const Eigen::Vector3d& scales, const UnitQuaternion& rotation);

ProjectedPoint project_point(const CameraModel& cam, const Eigen::Vector3d& mu_world);

// 2x3 Jacobian of the pinhole projection at a camera-space point (local affine
// approximation).  Requires z > near.
Eigen::Matrix<double, 2, 3> projection_jacobian(const CameraModel& cam, const Eigen::Vector3d& p_cam);

// Sigma' = J W Sigma W^T J^T.
ProjectedCovariance project_covariance(const CameraModel& cam, const Eigen::Matrix3d& cov_world,
                                       const Eigen::Vector3d& mu_world);

struct ColoredPoints {
    Eigen::MatrixXd positions;  // M x 3
    Eigen::MatrixXd colors;     // M x 3
};

// One world-space point per sampled pixel with finite positive depth.
// depth(row, col) is indexed from the top-left; colors are taken from the
// matching pixel of `color` (H x W x 3, row-major flattened, values in [0,1]).
ColoredPoints backproject_depth(const CameraModel& cam, const Eigen::MatrixXd& depth,
                                const std::vector<double>& color, int stride);

}  // namespace sags
