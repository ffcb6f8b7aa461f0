#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>

#include "sags/errors.hpp"

namespace sags {

struct UnitQuaternion {
    double w = 1, x = 0, y = 0, z = 0;

    static UnitQuaternion identity() { return {1, 0, 0, 0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    UnitQuaternion normalized() const {
        double n = norm();
        if (n < 1e-12) throw InputError("quaternion: cannot normalize a zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Eigen::Vector4d coeffs() const { return {w, x, y, z}; }
};

// Rotation matrix of a unit quaternion (w,x,y,z).
inline Eigen::Matrix3d quat_to_rotation(const UnitQuaternion& q_in) {
    UnitQuaternion q = q_in.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// Partial derivatives of quat_to_rotation with respect to the *unnormalized*
// components, i.e. the chain through q/|q| is included.  Used by backward passes.
inline std::array<Eigen::Matrix3d, 4> quat_rotation_jacobian(const Eigen::Vector4d& q_raw) {
    double n = q_raw.norm();
    if (n < 1e-12) throw InputError("quaternion: cannot differentiate at a zero quaternion");
    Eigen::Vector4d q = q_raw / n;
    const double w = q(0), x = q(1), y = q(2), z = q(3);

    // dR/d(unit q component)
    std::array<Eigen::Matrix3d, 4> du;
    du[0] << 0, -2 * z, 2 * y,
             2 * z, 0, -2 * x,
             -2 * y, 2 * x, 0;
    du[1] << 0, 2 * y, 2 * z,
             2 * y, -4 * x, -2 * w,
             2 * z, 2 * w, -4 * x;
    du[2] << -4 * y, 2 * x, 2 * w,
             2 * x, 0, 2 * z,
             -2 * w, 2 * z, -4 * y;
    du[3] << -4 * z, -2 * w, 2 * x,
             2 * w, -4 * z, 2 * y,
             2 * x, 2 * y, 0;

    // d(unit q)/d(raw q) = (I - q q^T) / n
    std::array<Eigen::Matrix3d, 4> out;
    for (int raw = 0; raw < 4; ++raw) {
        Eigen::Matrix3d acc = Eigen::Matrix3d::Zero();
        for (int unit = 0; unit < 4; ++unit) {
            double coef = ((raw == unit) ? 1.0 : 0.0) - q(unit) * q(raw);
            acc += du[unit] * (coef / n);
        }
        out[raw] = acc;
    }
    return out;
}

}  // namespace sags
