#include <random>

#include "doctest.h"
#include "sags/antialias.hpp"
#include "sags/geometry.hpp"

using namespace sags;

namespace {

Eigen::Matrix3d random_psd3(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Matrix3d a;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 3; ++j) a(i, j) = u(rng);
    return a * a.transpose() + 1e-3 * Eigen::Matrix3d::Identity();
}

Eigen::Matrix2d random_psd2(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::Matrix2d a;
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) a(i, j) = u(rng);
    return a * a.transpose() + 1e-3 * Eigen::Matrix2d::Identity();
}

}  // namespace

TEST_CASE("3d smoothing determinant law over random PSD matrices") {
    std::mt19937_64 rng(31);
    for (int i = 0; i < 1000; ++i) {
        Eigen::Matrix3d cov = random_psd3(rng);
        double vhat = 10 + 90 * (i % 7) / 6.0;
        Filtered3 f = smooth_3d(cov, vhat, 0.2);
        double lhs = f.amplitude * f.amplitude * f.cov.determinant();
        CHECK(std::abs(lhs - cov.determinant()) <= 1e-12 * std::max(1.0, cov.determinant()));
        CHECK(f.amplitude > 0);
        CHECK(f.amplitude <= 1.0);
    }
}

TEST_CASE("2d mip determinant law over random PSD matrices") {
    std::mt19937_64 rng(37);
    for (int i = 0; i < 1000; ++i) {
        Eigen::Matrix2d cov = random_psd2(rng);
        Filtered2 f = mip_2d(cov, 0.1);
        double lhs = f.amplitude * f.amplitude * f.cov.determinant();
        CHECK(std::abs(lhs - cov.determinant()) <= 1e-12 * std::max(1.0, cov.determinant()));
    }
}

TEST_CASE("identity covariance with unit filter gives the analytic amplitudes") {
    Filtered3 f3 = smooth_3d(Eigen::Matrix3d::Identity(), 1.0, 1.0);
    CHECK(std::abs(f3.amplitude - std::sqrt(1.0 / 8.0)) < 1e-12);
    Filtered2 f2 = mip_2d(Eigen::Matrix2d::Identity(), 1.0);
    CHECK(std::abs(f2.amplitude - std::sqrt(1.0 / 4.0)) < 1e-12);
}

TEST_CASE("zero filter size is the exact identity") {
    std::mt19937_64 rng(41);
    Eigen::Matrix3d cov = random_psd3(rng);
    Filtered3 f3 = smooth_3d(cov, 5.0, 0.0);
    CHECK(f3.cov == cov);
    CHECK(f3.amplitude == 1.0);
    Eigen::Matrix2d cov2 = random_psd2(rng);
    Filtered2 f2 = mip_2d(cov2, 0.0);
    CHECK(f2.cov == cov2);
    CHECK(f2.amplitude == 1.0);
}

TEST_CASE("3d filter variance adds s/vhat on the diagonal") {
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity() * 0.5;
    Filtered3 f = smooth_3d(cov, 4.0, 0.2);
    CHECK(std::abs(f.cov(0, 0) - (0.5 + 0.05)) < 1e-15);
    CHECK_THROWS_AS(smooth_3d(cov, 0.0, 0.2), InputError);
}

TEST_CASE("max sampling rate picks the closest observing camera") {
    CameraModel cam;
    cam.fx = 100;
    cam.fy = 100;
    cam.cx = 32;
    cam.cy = 32;
    cam.width = 64;
    cam.height = 64;
    cam.rotation.setIdentity();
    cam.translation.setZero();
    cam.far = 50;

    CameraModel far_cam = cam;
    far_cam.translation << 0, 0, -4;  // pushes the point to depth 5

    // point at depth 2 for cam, depth 6 for far_cam
    Eigen::Vector3d mu(0, 0, 2);
    double r = max_sampling_rate({cam, far_cam}, mu);
    CHECK(r == doctest::Approx(100.0 / 2.0));

    // behind both cameras: focal/far fallback
    double rb = max_sampling_rate({cam, far_cam}, {0, 0, -10});
    CHECK(rb == doctest::Approx(100.0 / 50.0));

    // outside the 15% border margin of the only camera
    double ro = max_sampling_rate({cam}, {100, 0, 2});
    CHECK(ro == doctest::Approx(100.0 / 50.0));

    CHECK_THROWS_AS(max_sampling_rate({}, mu), ConfigError);
}
