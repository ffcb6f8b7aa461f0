#include <random>

#include "doctest.h"
#include "sags/hexplane.hpp"

using namespace sags;

TEST_CASE("construction is seeded and in range") {
    HexPlaneField f = make_hexplane(8, 4, 3, {-1, -1, -1}, {1, 1, 1}, 0, 1, 7);
    for (int p = 0; p < 6; ++p) {
        CHECK(f.planes[static_cast<size_t>(p)].minCoeff() >= 0.9);
        CHECK(f.planes[static_cast<size_t>(p)].maxCoeff() <= 1.1);
        auto [d1, d2] = f.resolution[static_cast<size_t>(p)];
        CHECK(d1 == 4);
        CHECK(d2 == (kPlaneAxes[p][1] == 3 ? 3 : 4));
    }
    HexPlaneField g = make_hexplane(8, 4, 3, {-1, -1, -1}, {1, 1, 1}, 0, 1, 7);
    CHECK(f.planes[0] == g.planes[0]);
    HexPlaneField h = make_hexplane(8, 4, 3, {-1, -1, -1}, {1, 1, 1}, 0, 1, 8);
    CHECK(f.planes[0] != h.planes[0]);
}

TEST_CASE("normalization maps the box to the unit cube with clamping") {
    HexPlaneField f = make_hexplane(4, 4, 4, {-2, 0, 1}, {2, 4, 3}, 0.5, 1.5, 1);
    Eigen::Vector4d q = f.normalize({0, 2, 2}, 1.0);
    CHECK(q(0) == doctest::Approx(0.5));
    CHECK(q(1) == doctest::Approx(0.5));
    CHECK(q(2) == doctest::Approx(0.5));
    CHECK(q(3) == doctest::Approx(0.5));
    Eigen::Vector4d lo = f.normalize({-10, -10, -10}, -10);
    CHECK(lo == Eigen::Vector4d::Zero());
    Eigen::Vector4d hi = f.normalize({10, 10, 10}, 10);
    CHECK(hi == Eigen::Vector4d::Ones());
}

TEST_CASE("sampling is exact at texel centers") {
    int d1 = 5, d2 = 3, h = 4;
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd plane(d1 * d2, h);
    for (Eigen::Index i = 0; i < plane.rows(); ++i)
        for (int c = 0; c < h; ++c) plane(i, c) = u(rng);

    for (int i = 0; i < d1; ++i)
        for (int j = 0; j < d2; ++j) {
            Eigen::VectorXd s = sample_plane(plane, d1, d2, double(i) / (d1 - 1),
                                             double(j) / (d2 - 1));
            CHECK((s.transpose() - plane.row(i * d2 + j)).cwiseAbs().maxCoeff() < 1e-12);
        }
}

TEST_CASE("bilinear sampling matches a manual oracle") {
    int d1 = 4, d2 = 4, h = 2;
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd plane(d1 * d2, h);
    for (Eigen::Index i = 0; i < plane.rows(); ++i)
        for (int c = 0; c < h; ++c) plane(i, c) = u(rng);

    for (int trial = 0; trial < 20; ++trial) {
        double uu = u(rng), vv = u(rng);
        double x = uu * (d1 - 1), y = vv * (d2 - 1);
        int i0 = std::min(int(x), d1 - 2), j0 = std::min(int(y), d2 - 2);
        double fu = x - i0, fv = y - j0;
        Eigen::VectorXd expected =
            ((1 - fu) * (1 - fv) * plane.row(i0 * d2 + j0) +
             fu * (1 - fv) * plane.row((i0 + 1) * d2 + j0) +
             (1 - fu) * fv * plane.row(i0 * d2 + j0 + 1) +
             fu * fv * plane.row((i0 + 1) * d2 + j0 + 1))
                .transpose();
        CHECK((sample_plane(plane, d1, d2, uu, vv) - expected).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("sampling adjoint matches finite differences") {
    int d1 = 4, d2 = 5, h = 3;
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0, 1);
    Eigen::MatrixXd plane(d1 * d2, h);
    for (Eigen::Index i = 0; i < plane.rows(); ++i)
        for (int c = 0; c < h; ++c) plane(i, c) = u(rng);

    const double eps = 1e-6;
    for (int trial = 0; trial < 10; ++trial) {
        double uu = 0.05 + 0.9 * u(rng), vv = 0.05 + 0.9 * u(rng);
        Eigen::VectorXd w(h);
        for (int c = 0; c < h; ++c) w(c) = u(rng);  // loss = w . sample

        Eigen::MatrixXd gplane = Eigen::MatrixXd::Zero(d1 * d2, h);
        double gu = 0, gv = 0;
        sample_plane_backward(plane, d1, d2, uu, vv, w, gplane, gu, gv);

        double fdu = w.dot(sample_plane(plane, d1, d2, uu + eps, vv) -
                           sample_plane(plane, d1, d2, uu - eps, vv)) /
                     (2 * eps);
        double fdv = w.dot(sample_plane(plane, d1, d2, uu, vv + eps) -
                           sample_plane(plane, d1, d2, uu, vv - eps)) /
                     (2 * eps);
        CHECK(gu == doctest::Approx(fdu).epsilon(1e-5));
        CHECK(gv == doctest::Approx(fdv).epsilon(1e-5));

        // scatter adjoint: perturb a few texels
        for (int probe = 0; probe < 5; ++probe) {
            Eigen::Index r = static_cast<Eigen::Index>(u(rng) * (d1 * d2 - 1));
            int c = static_cast<int>(u(rng) * (h - 1));
            Eigen::MatrixXd pp = plane, pm = plane;
            pp(r, c) += eps;
            pm(r, c) -= eps;
            double fd = w.dot(sample_plane(pp, d1, d2, uu, vv) -
                              sample_plane(pm, d1, d2, uu, vv)) /
                        (2 * eps);
            CHECK(gplane(r, c) == doctest::Approx(fd).epsilon(1e-5));
        }
    }
}

TEST_CASE("encoding is the product of the six plane samples") {
    HexPlaneField f = make_hexplane(6, 5, 3, {-1, -1, -1}, {1, 1, 1}, 0, 1, 23);
    Eigen::Vector3d mu(0.3, -0.4, 0.2);
    double t = 0.7;
    Eigen::Vector4d q = f.normalize(mu, t);

    Eigen::ArrayXd expected = Eigen::ArrayXd::Ones(6);
    for (int p = 0; p < 6; ++p) {
        auto [d1, d2] = f.resolution[static_cast<size_t>(p)];
        expected *= sample_plane(f.planes[static_cast<size_t>(p)], d1, d2, q(kPlaneAxes[p][0]),
                                 q(kPlaneAxes[p][1]))
                        .array();
    }
    CHECK((encode(f, mu, t) - expected.matrix()).cwiseAbs().maxCoeff() < 1e-13);
    CHECK((encode_filtered(f, mu, t) - encode(f, mu, t)).cwiseAbs().maxCoeff() == 0);
}

TEST_CASE("validation") {
    HexPlaneField f = make_hexplane(4, 4, 4, {-1, -1, -1}, {1, 1, 1}, 0, 1, 1);
    f.aabb_max = f.aabb_min;
    CHECK_THROWS_AS(f.validate(), ConfigError);
    CHECK_THROWS_AS(make_hexplane(4, 1, 4, {-1, -1, -1}, {1, 1, 1}, 0, 1, 1), ConfigError);
}
