#include <random>

#include "doctest.h"
#include "sags/rasterizer.hpp"

using namespace sags;

namespace {

std::vector<SplatView> random_scene(int n, uint64_t seed, int width, int height) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    std::vector<SplatView> splats;
    for (int i = 0; i < n; ++i) {
        SplatView s;
        s.mean = {u(rng) * width, u(rng) * height};
        Eigen::Matrix2d a;
        a << 1 + 3 * u(rng), u(rng), u(rng), 1 + 3 * u(rng);
        s.cov = a * a.transpose() + 0.3 * Eigen::Matrix2d::Identity();
        s.color = {u(rng), u(rng), u(rng)};
        s.opacity = 0.05 + 0.9 * u(rng);
        s.z = 0.5 + 5 * u(rng);
        splats.push_back(s);
    }
    return splats;
}

Eigen::MatrixXd pack_from_views(const std::vector<SplatView>& splats, std::vector<char>& valid) {
    Eigen::MatrixXd packed(static_cast<Eigen::Index>(splats.size()), kSplatCols);
    valid.assign(splats.size(), 1);
    for (size_t i = 0; i < splats.size(); ++i) {
        const SplatView& s = splats[i];
        Eigen::Matrix2d conic = s.cov.inverse();
        packed.row(static_cast<Eigen::Index>(i)) << s.mean.x(), s.mean.y(), conic(0, 0),
            conic(0, 1), conic(1, 1), s.color.x(), s.color.y(), s.color.z(), s.opacity, s.z;
    }
    return packed;
}

}  // namespace

TEST_CASE("single-pixel two-splat compositing matches the expanded formula") {
    // two isotropic splats centered exactly on a 1x1 image's pixel
    std::vector<SplatView> splats(2);
    for (int i = 0; i < 2; ++i) {
        splats[i].mean = {0, 0};
        splats[i].cov = Eigen::Matrix2d::Identity();
        splats[i].z = i + 1.0;  // splat 0 in front
    }
    splats[0].color = {0.8, 0.2, 0.4};
    splats[0].opacity = 0.6;
    splats[1].color = {0.1, 0.9, 0.5};
    splats[1].opacity = 0.7;
    Eigen::Vector3d bg(0.2, 0.3, 0.1);

    RenderConfig cfg;
    RenderOutput out = render(splats, 1, 1, bg, cfg);

    // alpha_i = opacity * exp(0) = opacity at the center
    double a1 = 0.6, a2 = 0.7;
    double t_end = (1 - a1) * (1 - a2);
    for (int c = 0; c < 3; ++c) {
        double expected = splats[0].color(c) * a1 + splats[1].color(c) * a2 * (1 - a1) +
                          bg(c) * t_end;
        CHECK(out.color[static_cast<size_t>(c)] == doctest::Approx(expected).epsilon(1e-12));
    }
    CHECK(out.alpha[0] == doctest::Approx(1 - t_end).epsilon(1e-12));
    double d_expected = 1.0 * a1 + 2.0 * a2 * (1 - a1);
    CHECK(out.depth_acc[0] == doctest::Approx(d_expected).epsilon(1e-12));
    CHECK(out.depth[0] == doctest::Approx(d_expected / (1 - t_end)).epsilon(1e-12));
}

TEST_CASE("depth ordering ignores the input order") {
    std::vector<SplatView> splats = random_scene(10, 77, 8, 8);
    RenderConfig cfg;
    Eigen::Vector3d bg(0, 0, 0);
    RenderOutput a = render(splats, 8, 8, bg, cfg);
    std::reverse(splats.begin(), splats.end());
    RenderOutput b = render(splats, 8, 8, bg, cfg);
    for (size_t i = 0; i < a.color.size(); ++i) CHECK(a.color[i] == doctest::Approx(b.color[i]));
}

TEST_CASE("tiled and brute-force renders agree") {
    Eigen::Vector3d bg(0.1, 0.2, 0.3);
    RenderConfig cfg;
    cfg.early_stop = false;  // exact equivalence mode
    for (uint64_t seed = 0; seed < 5; ++seed) {
        std::vector<SplatView> splats = random_scene(60, seed, 64, 64);
        RenderOutput t = render(splats, 64, 64, bg, cfg);
        RenderOutput b = render_bruteforce(splats, 64, 64, bg, cfg);
        double worst = 0;
        for (size_t i = 0; i < t.color.size(); ++i)
            worst = std::max(worst, std::abs(t.color[i] - b.color[i]));
        for (size_t i = 0; i < t.depth_acc.size(); ++i) {
            worst = std::max(worst, std::abs(t.depth_acc[i] - b.depth_acc[i]));
            worst = std::max(worst, std::abs(t.alpha[i] - b.alpha[i]));
        }
        CHECK(worst <= 1e-6);
    }
}

TEST_CASE("early stopping stays within the transmittance budget") {
    std::vector<SplatView> splats = random_scene(120, 5, 32, 32);
    Eigen::Vector3d bg(0.5, 0.5, 0.5);
    RenderConfig on;
    on.early_stop = true;
    RenderConfig off = on;
    off.early_stop = false;
    RenderOutput a = render(splats, 32, 32, bg, on);
    RenderOutput b = render(splats, 32, 32, bg, off);
    for (size_t i = 0; i < a.color.size(); ++i)
        CHECK(std::abs(a.color[i] - b.color[i]) < 2e-4);
}

TEST_CASE("worker count does not change the output") {
    std::vector<SplatView> splats = random_scene(80, 13, 48, 48);
    Eigen::Vector3d bg(0, 0, 0);
    RenderConfig one;
    one.workers = 1;
    RenderConfig four = one;
    four.workers = 4;
    RenderOutput a = render(splats, 48, 48, bg, one);
    RenderOutput b = render(splats, 48, 48, bg, four);
    CHECK(a.color == b.color);
    CHECK(a.depth == b.depth);
}

TEST_CASE("singular covariance splats are skipped and counted") {
    std::vector<SplatView> splats = random_scene(3, 1, 8, 8);
    splats[1].cov.setZero();
    RenderConfig cfg;
    RenderOutput out = render(splats, 8, 8, {0, 0, 0}, cfg);
    CHECK(out.skipped_singular == 1);
}

TEST_CASE("raster backward matches finite differences") {
    const int w = 12, h = 10;
    std::vector<SplatView> splats = random_scene(6, 21, w, h);
    std::vector<char> valid;
    Eigen::MatrixXd packed = pack_from_views(splats, valid);
    Eigen::Vector3d bg(0.3, 0.1, 0.6);
    RenderConfig cfg;
    cfg.early_stop = false;

    // random linear functional over all outputs
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<double> wc(static_cast<size_t>(w) * h * 3), wd(static_cast<size_t>(w) * h),
        wa(static_cast<size_t>(w) * h);
    for (auto& v : wc) v = u(rng);
    for (auto& v : wd) v = u(rng);
    for (auto& v : wa) v = u(rng);

    auto lossf = [&](const Eigen::MatrixXd& p) {
        RasterForward f = raster_forward(p, valid, w, h, bg, cfg, true);
        double acc = 0;
        for (size_t i = 0; i < wc.size(); ++i) acc += wc[i] * f.out.color[i];
        for (size_t i = 0; i < wd.size(); ++i) acc += wd[i] * f.out.depth_acc[i];
        for (size_t i = 0; i < wa.size(); ++i) acc += wa[i] * f.out.alpha[i];
        return acc;
    };

    Eigen::MatrixXd grad = raster_backward(packed, valid, w, h, bg, cfg, wc, wd, wa);
    const double eps = 1e-6;
    for (Eigen::Index i = 0; i < packed.rows(); ++i)
        for (int c = 0; c < kSplatCols; ++c) {
            Eigen::MatrixXd pp = packed, pm = packed;
            pp(i, c) += eps;
            pm(i, c) -= eps;
            double fd = (lossf(pp) - lossf(pm)) / (2 * eps);
            double scale = std::max({1.0, std::abs(fd), std::abs(grad(i, c))});
            CHECK(std::abs(grad(i, c) - fd) / scale < 2e-5);
        }
}

TEST_CASE("backward is identical across worker counts") {
    const int w = 32, h = 32;
    std::vector<SplatView> splats = random_scene(40, 3, w, h);
    std::vector<char> valid;
    Eigen::MatrixXd packed = pack_from_views(splats, valid);
    Eigen::Vector3d bg(0, 0, 0);
    std::vector<double> wc(static_cast<size_t>(w) * h * 3, 0.5),
        wd(static_cast<size_t>(w) * h, 0.25), wa(static_cast<size_t>(w) * h, -0.1);
    RenderConfig one;
    one.workers = 1;
    RenderConfig four = one;
    four.workers = 4;
    Eigen::MatrixXd g1 = raster_backward(packed, valid, w, h, bg, one, wc, wd, wa);
    Eigen::MatrixXd g4 = raster_backward(packed, valid, w, h, bg, four, wc, wd, wa);
    CHECK(g1 == g4);
}
