#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>

#include "sags/errors.hpp"

namespace sags {

// Plane order used throughout: XY, XZ, YZ, XT, YT, ZT.
// Axis pairs sampled per plane, indices 0..2 = x,y,z and 3 = normalized time.
inline constexpr int kPlaneAxes[6][2] = {{0, 1}, {0, 2}, {1, 2}, {0, 3}, {1, 3}, {2, 3}};

// Six 2D feature grids over all axis pairs of (x, y, z, t).  Each grid is
// stored as (D1*D2) x h, row-major over (i1, i2) texels; features are fused
// by element-wise product.
struct HexPlaneField {
    int feature_dim = 32;
    std::array<Eigen::MatrixXd, 6> planes;
    std::array<std::pair<int, int>, 6> resolution;  // (D1, D2) per plane
    Eigen::Vector3d aabb_min = Eigen::Vector3d::Constant(-1);
    Eigen::Vector3d aabb_max = Eigen::Vector3d::Constant(1);
    double t0 = 0, t1 = 1;

    // Affine map of the AABB to [0,1]^3 and [t0,t1] to [0,1], clamped.
    Eigen::Vector4d normalize(const Eigen::Vector3d& mu, double t) const;

    void validate() const;
};

// Grids initialized uniformly in [0.9, 1.1]; zeros would annihilate the
// product fusion.
HexPlaneField make_hexplane(int feature_dim, int spatial_res, int temporal_res,
                            const Eigen::Vector3d& aabb_min, const Eigen::Vector3d& aabb_max,
                            double t0, double t1, uint64_t seed);

// Bilinear sample of one plane at (u, v) in [0,1]^2; exact at texel centers
// (align-corners convention, texel (i1, i2) sits at u = i1/(D1-1)).
Eigen::VectorXd sample_plane(const Eigen::MatrixXd& plane, int d1, int d2, double u, double v);

// Scatter/coordinate adjoint of sample_plane.
void sample_plane_backward(const Eigen::MatrixXd& plane, int d1, int d2, double u, double v,
                           const Eigen::VectorXd& grad_out, Eigen::MatrixXd& grad_plane,
                           double& grad_u, double& grad_v);

// Element-wise product of the six sampled feature vectors at (mu, t).
Eigen::VectorXd encode(const HexPlaneField& field, const Eigen::Vector3d& mu, double t);

// Identical sampling math evaluated at the filtered/deformed configuration.
Eigen::VectorXd encode_filtered(const HexPlaneField& field, const Eigen::Vector3d& mu_filtered,
                                double t);

}  // namespace sags
