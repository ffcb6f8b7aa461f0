#include <random>

#include "doctest.h"
#include "sags/metrics.hpp"

using namespace sags;

namespace {

std::vector<double> random_buf(size_t n, uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

}  // namespace

TEST_CASE("psnr closed forms") {
    // uniform error of 0.1 at peak 1: mse = 0.01, psnr = 20 dB
    std::vector<double> a(64, 0.5), b(64, 0.6);
    PsnrResult r = psnr(a, b);
    CHECK(!r.infinite);
    CHECK(r.mse == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(r.psnr == doctest::Approx(20.0).epsilon(1e-12));

    // halved error adds ~6.0206 dB
    std::vector<double> c(64, 0.55);
    CHECK(psnr(a, c).psnr == doctest::Approx(20.0 + 20 * std::log10(2.0)).epsilon(1e-10));

    // peak scales the score by 20 log10(peak)
    CHECK(psnr(a, b, 2.0).psnr == doctest::Approx(20.0 + 20 * std::log10(2.0)).epsilon(1e-10));
}

TEST_CASE("psnr of identical buffers is flagged infinite") {
    std::vector<double> a = random_buf(100, 1);
    PsnrResult r = psnr(a, a);
    CHECK(r.infinite);
    CHECK(r.mse == 0);
    CHECK(r.psnr == 999.0);
}

TEST_CASE("psnr rejects mismatched or empty inputs") {
    std::vector<double> a(4, 0.0), b(5, 0.0);
    CHECK_THROWS_AS(psnr(a, b), InputError);
    CHECK_THROWS_AS(psnr({}, {}), InputError);
}

TEST_CASE("ssim of an image with itself is one") {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd img(16, 20);
    for (int i = 0; i < 16; ++i)
        for (int j = 0; j < 20; ++j) img(i, j) = u(rng);
    CHECK(ssim(img, img) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim is symmetric and bounded") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd a(14, 14), b(14, 14);
    for (int i = 0; i < 14; ++i)
        for (int j = 0; j < 14; ++j) {
            a(i, j) = u(rng);
            b(i, j) = u(rng);
        }
    double sab = ssim(a, b), sba = ssim(b, a);
    CHECK(sab == doctest::Approx(sba).epsilon(1e-12));
    CHECK(sab <= 1.0);
    CHECK(sab >= -1.0);
    // unrelated noise should score well below a matching pair
    Eigen::MatrixXd a2 = a.array() + 0.01;
    CHECK(ssim(a, a2.cwiseMin(1.0)) > sab);
}

TEST_CASE("ssim closed form for a constant offset") {
    // constant images: all variances and covariances vanish inside every
    // window, so ssim = (2 mu_a mu_b + c1) / (mu_a^2 + mu_b^2 + c1)
    Eigen::MatrixXd a = Eigen::MatrixXd::Constant(12, 12, 0.4);
    Eigen::MatrixXd b = Eigen::MatrixXd::Constant(12, 12, 0.6);
    double c1 = 0.01 * 0.01;
    double expected = (2 * 0.4 * 0.6 + c1) / (0.4 * 0.4 + 0.6 * 0.6 + c1);
    CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("ssim requires windows to fit") {
    Eigen::MatrixXd tiny = Eigen::MatrixXd::Zero(8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), InputError);
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(12, 12), b = Eigen::MatrixXd::Zero(12, 13);
    CHECK_THROWS_AS(ssim(a, b), InputError);
}

TEST_CASE("rgb ssim averages the channels") {
    const int w = 13, h = 12;
    std::vector<double> a = random_buf(static_cast<size_t>(w) * h * 3, 21);
    std::vector<double> b = random_buf(static_cast<size_t>(w) * h * 3, 22);
    Eigen::MatrixXd ca[3], cb[3];
    for (int c = 0; c < 3; ++c) {
        ca[c].resize(h, w);
        cb[c].resize(h, w);
        for (int i = 0; i < h; ++i)
            for (int j = 0; j < w; ++j) {
                ca[c](i, j) = a[(static_cast<size_t>(i) * w + j) * 3 + static_cast<size_t>(c)];
                cb[c](i, j) = b[(static_cast<size_t>(i) * w + j) * 3 + static_cast<size_t>(c)];
            }
    }
    double expected = (ssim(ca[0], cb[0]) + ssim(ca[1], cb[1]) + ssim(ca[2], cb[2])) / 3;
    CHECK(ssim_rgb(a, b, w, h) == doctest::Approx(expected).epsilon(1e-12));
    CHECK(ssim_rgb(a, a, w, h) == doctest::Approx(1.0).epsilon(1e-12));
}
