#include "sags/sh.hpp"

#include <algorithm>

#include "sags/errors.hpp"

namespace sags {

namespace {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554, -0.4570457994644658,
                           0.3731763325901154, -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
}  // namespace

Eigen::VectorXd sh_basis(int degree, const Eigen::Vector3d& dir) {
    if (degree < 0 || degree > 3) throw ConfigError("sh: degree must be in [0, 3]");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    Eigen::VectorXd b(sh_coeff_count(degree));
    b(0) = kC0;
    if (degree >= 1) {
        b(1) = -kC1 * y;
        b(2) = kC1 * z;
        b(3) = -kC1 * x;
    }
    if (degree >= 2) {
        const double xx = x * x, yy = y * y, zz = z * z;
        b(4) = kC2[0] * x * y;
        b(5) = kC2[1] * y * z;
        b(6) = kC2[2] * (2 * zz - xx - yy);
        b(7) = kC2[3] * x * z;
        b(8) = kC2[4] * (xx - yy);
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        b(9) = kC3[0] * y * (3 * xx - yy);
        b(10) = kC3[1] * x * y * z;
        b(11) = kC3[2] * y * (4 * zz - xx - yy);
        b(12) = kC3[3] * z * (2 * zz - 3 * xx - 3 * yy);
        b(13) = kC3[4] * x * (4 * zz - xx - yy);
        b(14) = kC3[5] * z * (xx - yy);
        b(15) = kC3[6] * x * (xx - 3 * yy);
    }
    return b;
}

Eigen::MatrixXd sh_basis_grad(int degree, const Eigen::Vector3d& dir) {
    if (degree < 0 || degree > 3) throw ConfigError("sh: degree must be in [0, 3]");
    const double x = dir.x(), y = dir.y(), z = dir.z();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(sh_coeff_count(degree), 3);
    if (degree >= 1) {
        g(1, 1) = -kC1;
        g(2, 2) = kC1;
        g(3, 0) = -kC1;
    }
    if (degree >= 2) {
        g.row(4) = Eigen::RowVector3d(kC2[0] * y, kC2[0] * x, 0);
        g.row(5) = Eigen::RowVector3d(0, kC2[1] * z, kC2[1] * y);
        g.row(6) = Eigen::RowVector3d(-2 * kC2[2] * x, -2 * kC2[2] * y, 4 * kC2[2] * z);
        g.row(7) = Eigen::RowVector3d(kC2[3] * z, 0, kC2[3] * x);
        g.row(8) = Eigen::RowVector3d(2 * kC2[4] * x, -2 * kC2[4] * y, 0);
    }
    if (degree >= 3) {
        const double xx = x * x, yy = y * y, zz = z * z;
        g.row(9) = Eigen::RowVector3d(kC3[0] * 6 * x * y, kC3[0] * (3 * xx - 3 * yy), 0);
        g.row(10) = Eigen::RowVector3d(kC3[1] * y * z, kC3[1] * x * z, kC3[1] * x * y);
        g.row(11) = Eigen::RowVector3d(-2 * kC3[2] * x * y, kC3[2] * (4 * zz - xx - 3 * yy),
                                       kC3[2] * 8 * y * z);
        g.row(12) = Eigen::RowVector3d(-6 * kC3[3] * x * z, -6 * kC3[3] * y * z,
                                       kC3[3] * (6 * zz - 3 * xx - 3 * yy));
        g.row(13) = Eigen::RowVector3d(kC3[4] * (4 * zz - 3 * xx - yy), -2 * kC3[4] * x * y,
                                       kC3[4] * 8 * x * z);
        g.row(14) = Eigen::RowVector3d(2 * kC3[5] * x * z, -2 * kC3[5] * y * z, kC3[5] * (xx - yy));
        g.row(15) = Eigen::RowVector3d(kC3[6] * (3 * xx - 3 * yy), -6 * kC3[6] * x * y, 0);
    }
    return g;
}

Eigen::Vector3d evaluate_sh(int degree, const Eigen::MatrixXd& coeffs, const Eigen::Vector3d& dir) {
    if (coeffs.rows() != sh_coeff_count(degree) || coeffs.cols() != 3)
        throw InputError("evaluate_sh: coefficient shape does not match the SH degree");
    Eigen::VectorXd b = sh_basis(degree, dir);
    Eigen::Vector3d c = coeffs.transpose() * b;
    return (c.array() + 0.5).cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace sags
