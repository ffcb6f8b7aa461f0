#pragma once

#include <Eigen/Dense>

#include "sags/errors.hpp"

namespace sags {

// Pinhole camera with a world-to-camera rigid transform.  Camera space is
// +z forward, image origin at the top-left, pixels indexed row-major.
struct CameraModel {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;
    Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();  // world -> camera
    Eigen::Vector3d translation = Eigen::Vector3d::Zero();
    double near = 0.01;
    double far = 100.0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw ConfigError("camera: focal lengths must be positive");
        if (width <= 0 || height <= 0) throw ConfigError("camera: image size must be positive");
        if (!(0 < near && near < far)) throw ConfigError("camera: require 0 < near < far");
        Eigen::Matrix3d rtr = rotation.transpose() * rotation;
        double dev = (rtr - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff();
        if (dev > 1e-9 || rotation.determinant() < 0)
            throw ConfigError("camera: rotation is not a proper orthonormal matrix");
    }

    Eigen::Vector3d to_camera(const Eigen::Vector3d& p_world) const {
        return rotation * p_world + translation;
    }

    Eigen::Vector3d camera_center() const { return -rotation.transpose() * translation; }
};

}  // namespace sags
