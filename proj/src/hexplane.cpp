#include "sags/hexplane.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace sags {

Eigen::Vector4d HexPlaneField::normalize(const Eigen::Vector3d& mu, double t) const {
    Eigen::Vector4d out;
    for (int a = 0; a < 3; ++a) {
        double v = (mu(a) - aabb_min(a)) / (aabb_max(a) - aabb_min(a));
        out(a) = std::clamp(v, 0.0, 1.0);
    }
    out(3) = (t1 > t0) ? std::clamp((t - t0) / (t1 - t0), 0.0, 1.0) : 0.0;
    return out;
}

void HexPlaneField::validate() const {
    if (((aabb_max - aabb_min).array() <= 0).any())
        throw ConfigError("hexplane: AABB must have strictly positive extent");
    if (!(t1 > t0)) throw ConfigError("hexplane: require t1 > t0");
    for (int p = 0; p < 6; ++p) {
        auto [d1, d2] = resolution[p];
        if (d1 < 2 || d2 < 2) throw ConfigError("hexplane: plane resolution must be >= 2");
        if (planes[p].rows() != static_cast<Eigen::Index>(d1) * d2 ||
            planes[p].cols() != feature_dim)
            throw ConfigError("hexplane: plane storage does not match its resolution");
    }
}

HexPlaneField make_hexplane(int feature_dim, int spatial_res, int temporal_res,
                            const Eigen::Vector3d& aabb_min, const Eigen::Vector3d& aabb_max,
                            double t0, double t1, uint64_t seed) {
    HexPlaneField f;
    f.feature_dim = feature_dim;
    f.aabb_min = aabb_min;
    f.aabb_max = aabb_max;
    f.t0 = t0;
    f.t1 = t1;
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.9, 1.1);
    for (int p = 0; p < 6; ++p) {
        int d2 = (kPlaneAxes[p][1] == 3) ? temporal_res : spatial_res;
        f.resolution[p] = {spatial_res, d2};
        f.planes[p].resize(static_cast<Eigen::Index>(spatial_res) * d2, feature_dim);
        for (Eigen::Index i = 0; i < f.planes[p].rows(); ++i)
            for (int c = 0; c < feature_dim; ++c) f.planes[p](i, c) = u(rng);
    }
    f.validate();
    return f;
}

namespace {
struct BilinearCoords {
    int i0, i1, j0, j1;
    double fu, fv;
};

BilinearCoords bilinear_setup(int d1, int d2, double u, double v) {
    double x = std::clamp(u, 0.0, 1.0) * (d1 - 1);
    double y = std::clamp(v, 0.0, 1.0) * (d2 - 1);
    BilinearCoords c;
    c.i0 = std::min(static_cast<int>(x), d1 - 2);
    c.j0 = std::min(static_cast<int>(y), d2 - 2);
    c.i1 = c.i0 + 1;
    c.j1 = c.j0 + 1;
    c.fu = x - c.i0;
    c.fv = y - c.j0;
    return c;
}
}  // namespace

Eigen::VectorXd sample_plane(const Eigen::MatrixXd& plane, int d1, int d2, double u, double v) {
    auto c = bilinear_setup(d1, d2, u, v);
    auto texel = [&](int i, int j) { return plane.row(static_cast<Eigen::Index>(i) * d2 + j); };
    return ((1 - c.fu) * (1 - c.fv) * texel(c.i0, c.j0) + c.fu * (1 - c.fv) * texel(c.i1, c.j0) +
            (1 - c.fu) * c.fv * texel(c.i0, c.j1) + c.fu * c.fv * texel(c.i1, c.j1))
        .transpose();
}

void sample_plane_backward(const Eigen::MatrixXd& plane, int d1, int d2, double u, double v,
                           const Eigen::VectorXd& grad_out, Eigen::MatrixXd& grad_plane,
                           double& grad_u, double& grad_v) {
    auto c = bilinear_setup(d1, d2, u, v);
    auto row = [&](int i, int j) -> Eigen::Index { return static_cast<Eigen::Index>(i) * d2 + j; };
    grad_plane.row(row(c.i0, c.j0)) += (1 - c.fu) * (1 - c.fv) * grad_out.transpose();
    grad_plane.row(row(c.i1, c.j0)) += c.fu * (1 - c.fv) * grad_out.transpose();
    grad_plane.row(row(c.i0, c.j1)) += (1 - c.fu) * c.fv * grad_out.transpose();
    grad_plane.row(row(c.i1, c.j1)) += c.fu * c.fv * grad_out.transpose();

    auto texel = [&](int i, int j) { return plane.row(row(i, j)); };
    Eigen::VectorXd du = ((1 - c.fv) * (texel(c.i1, c.j0) - texel(c.i0, c.j0)) +
                          c.fv * (texel(c.i1, c.j1) - texel(c.i0, c.j1)))
                             .transpose();
    Eigen::VectorXd dv = ((1 - c.fu) * (texel(c.i0, c.j1) - texel(c.i0, c.j0)) +
                          c.fu * (texel(c.i1, c.j1) - texel(c.i1, c.j0)))
                             .transpose();
    // chain through the [0,1] -> texel-space stretch; zero outside the clamp range
    grad_u = (u >= 0.0 && u <= 1.0) ? grad_out.dot(du) * (d1 - 1) : 0.0;
    grad_v = (v >= 0.0 && v <= 1.0) ? grad_out.dot(dv) * (d2 - 1) : 0.0;
}

Eigen::VectorXd encode(const HexPlaneField& field, const Eigen::Vector3d& mu, double t) {
    Eigen::Vector4d q = field.normalize(mu, t);
    Eigen::VectorXd out = Eigen::VectorXd::Ones(field.feature_dim);
    for (int p = 0; p < 6; ++p) {
        auto [d1, d2] = field.resolution[p];
        out.array() *=
            sample_plane(field.planes[p], d1, d2, q(kPlaneAxes[p][0]), q(kPlaneAxes[p][1])).array();
    }
    return out;
}

Eigen::VectorXd encode_filtered(const HexPlaneField& field, const Eigen::Vector3d& mu_filtered,
                                double t) {
    return encode(field, mu_filtered, t);
}

}  // namespace sags
