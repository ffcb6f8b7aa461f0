#pragma once

#include <Eigen/Dense>

#include "sags/errors.hpp"

namespace sags {

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real spherical harmonic basis at a unit direction, splatting convention
// (degree up to 3).  Returns a K-vector.
Eigen::VectorXd sh_basis(int degree, const Eigen::Vector3d& dir);

// d(basis)/d(dir), K x 3, treating the components of dir as free variables.
Eigen::MatrixXd sh_basis_grad(int degree, const Eigen::Vector3d& dir);

// Color = clamp(0.5 + sum_k coeffs(k,:) * Y_k(dir)) per channel.
// coeffs is K x 3.
Eigen::Vector3d evaluate_sh(int degree, const Eigen::MatrixXd& coeffs, const Eigen::Vector3d& dir);

}  // namespace sags
