#include <random>

#include "doctest.h"
#include "sags/sh.hpp"

using namespace sags;

TEST_CASE("degree-0 basis is the constant term") {
    Eigen::VectorXd b = sh_basis(0, Eigen::Vector3d(0.3, -0.8, 0.5).normalized());
    REQUIRE(b.size() == 1);
    CHECK(b(0) == doctest::Approx(0.28209479177387814).epsilon(1e-15));
}

TEST_CASE("coefficient counts") {
    CHECK(sh_coeff_count(0) == 1);
    CHECK(sh_coeff_count(1) == 4);
    CHECK(sh_coeff_count(2) == 9);
    CHECK(sh_coeff_count(3) == 16);
    CHECK_THROWS(sh_basis(4, {0, 0, 1}));
}

TEST_CASE("dc-only evaluation reproduces the stored color") {
    // coefficients chosen so 0.5 + c * Y00 equals the target exactly
    Eigen::Vector3d target(0.2, 0.55, 0.9);
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(9, 3);
    for (int ch = 0; ch < 3; ++ch) coeffs(0, ch) = (target(ch) - 0.5) / 0.28209479177387814;
    Eigen::Vector3d got = evaluate_sh(2, coeffs, Eigen::Vector3d(1, 2, 3).normalized());
    CHECK((got - target).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("evaluation clamps to [0,1]") {
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(1, 3);
    coeffs(0, 0) = 100;
    coeffs(0, 1) = -100;
    Eigen::Vector3d got = evaluate_sh(0, coeffs, {0, 0, 1});
    CHECK(got(0) == 1.0);
    CHECK(got(1) == 0.0);
    CHECK(got(2) == 0.5);
}

TEST_CASE("basis gradient matches finite differences") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-1, 1);
    const double eps = 1e-6;
    for (int trial = 0; trial < 8; ++trial) {
        Eigen::Vector3d dir(u(rng), u(rng), u(rng));
        for (int degree = 0; degree <= 3; ++degree) {
            Eigen::MatrixXd g = sh_basis_grad(degree, dir);
            for (int a = 0; a < 3; ++a) {
                Eigen::Vector3d dp = dir, dm = dir;
                dp(a) += eps;
                dm(a) -= eps;
                Eigen::VectorXd fd = (sh_basis(degree, dp) - sh_basis(degree, dm)) / (2 * eps);
                CHECK((fd - g.col(a)).cwiseAbs().maxCoeff() < 1e-7);
            }
        }
    }
}

TEST_CASE("shape validation") {
    Eigen::MatrixXd coeffs = Eigen::MatrixXd::Zero(4, 3);
    CHECK_THROWS_AS(evaluate_sh(2, coeffs, {0, 0, 1}), InputError);
}
