#include "sags/gaussian_cloud.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

namespace sags {

Eigen::MatrixXd GaussianCloud::sh_matrix(int i) const {
    const int k = sh_count();
    Eigen::MatrixXd m(k, 3);
    for (int j = 0; j < k; ++j)
        for (int c = 0; c < 3; ++c) m(j, c) = sh_coeffs(i, j * 3 + c);
    return m;
}

void GaussianCloud::validate() const {
    const Eigen::Index n = positions.rows();
    if (positions.cols() != 3) throw InputError("cloud: positions must be N x 3");
    if (log_scales.rows() != n || log_scales.cols() != 3)
        throw InputError("cloud: log_scales shape mismatch");
    if (rotations.rows() != n || rotations.cols() != 4)
        throw InputError("cloud: rotations shape mismatch");
    if (sh_coeffs.rows() != n || sh_coeffs.cols() != 3 * sh_count())
        throw InputError("cloud: sh_coeffs shape mismatch");
    if (opacity_logits.size() != n) throw InputError("cloud: opacity_logits shape mismatch");
    if (max_sampling_rate.size() != n) throw InputError("cloud: max_sampling_rate shape mismatch");
}

GaussianCloud init_from_points(const Eigen::MatrixXd& points, const Eigen::MatrixXd& colors,
                               double subsample_fraction, uint64_t seed, int sh_degree) {
    const Eigen::Index m = points.rows();
    if (m < 1) throw InputError("init_from_points: empty point set");
    if (colors.rows() != m || colors.cols() != 3)
        throw InputError("init_from_points: colors must match points");
    if (!(subsample_fraction > 0 && subsample_fraction <= 1))
        throw ConfigError("init_from_points: subsample_fraction must be in (0, 1]");

    const Eigen::Index n =
        std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::llround(m * subsample_fraction)));

    std::vector<Eigen::Index> idx(m);
    for (Eigen::Index i = 0; i < m; ++i) idx[i] = i;
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(n);
    std::sort(idx.begin(), idx.end());

    GaussianCloud c;
    c.sh_degree = sh_degree;
    c.positions.resize(n, 3);
    c.log_scales.resize(n, 3);
    c.rotations.resize(n, 4);
    c.sh_coeffs = Eigen::MatrixXd::Zero(n, 3 * c.sh_count());
    c.opacity_logits.resize(n);
    c.max_sampling_rate = Eigen::VectorXd::Zero(n);

    const double y00 = sh_basis(0, Eigen::Vector3d::UnitZ())(0);
    for (Eigen::Index i = 0; i < n; ++i) {
        c.positions.row(i) = points.row(idx[i]);
        c.rotations.row(i) << 1, 0, 0, 0;
        c.opacity_logits(i) = logit(0.1);
        for (int ch = 0; ch < 3; ++ch)
            c.sh_coeffs(i, ch) = (colors(idx[i], ch) - 0.5) / y00;
    }

    // Isotropic scale = distance to the nearest retained neighbor.
    Eigen::Vector3d lo = c.positions.colwise().minCoeff();
    Eigen::Vector3d hi = c.positions.colwise().maxCoeff();
    double fallback = std::max(1e-3, 0.1 * (hi - lo).norm());
    for (Eigen::Index i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (Eigen::Index j = 0; j < n; ++j) {
            if (j == i) continue;
            best = std::min(best, (c.positions.row(i) - c.positions.row(j)).norm());
        }
        if (!std::isfinite(best) || best <= 0) best = fallback;
        c.log_scales.row(i).setConstant(std::log(best));
    }
    return c;
}

DensifyResult densify_and_prune(const GaussianCloud& cloud, const Eigen::VectorXd& grad_accum,
                                const DensifyConfig& cfg, uint64_t seed) {
    cloud.validate();
    if (grad_accum.size() != cloud.size())
        throw InputError("densify_and_prune: grad_accum does not align with the cloud");
    if (cfg.opacity_min <= 0 || cfg.grad_threshold <= 0 || cfg.scale_split_threshold <= 0)
        throw ConfigError("densify_and_prune: thresholds must be positive");

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    std::vector<Eigen::VectorXd> rows_pos, rows_ls, rows_rot, rows_sh;
    std::vector<double> logits, vhat;
    std::vector<int> src;

    auto push = [&](int source, const Eigen::Vector3d& p, const Eigen::Vector3d& ls) {
        rows_pos.push_back(p);
        rows_ls.push_back(ls);
        rows_rot.push_back(cloud.rotations.row(source));
        rows_sh.push_back(cloud.sh_coeffs.row(source));
        logits.push_back(cloud.opacity_logits(source));
        vhat.push_back(cloud.max_sampling_rate(source));
        src.push_back(source);
    };

    for (int i = 0; i < cloud.size(); ++i) {
        if (sigmoid(cloud.opacity_logits(i)) < cfg.opacity_min) continue;  // pruned
        Eigen::Vector3d p = cloud.positions.row(i);
        Eigen::Vector3d ls = cloud.log_scales.row(i);
        if (grad_accum(i) > cfg.grad_threshold) {
            Eigen::Vector3d s = ls.array().exp();
            if (s.maxCoeff() <= cfg.scale_split_threshold) {
                // clone: small primitive, duplicate in place
                push(i, p, ls);
                push(i, p, ls);
            } else {
                // split into two children with scale / split_factor, offset
                // sampled from the parent's own distribution
                Eigen::Vector3d child_ls = ls.array() - std::log(cfg.split_factor);
                for (int k = 0; k < 2; ++k) {
                    Eigen::Vector3d offset(gauss(rng) * s.x(), gauss(rng) * s.y(),
                                           gauss(rng) * s.z());
                    push(i, p + offset, child_ls);
                }
            }
        } else {
            push(i, p, ls);
        }
    }

    DensifyResult out;
    const Eigen::Index n = static_cast<Eigen::Index>(rows_pos.size());
    out.cloud.sh_degree = cloud.sh_degree;
    out.cloud.positions.resize(n, 3);
    out.cloud.log_scales.resize(n, 3);
    out.cloud.rotations.resize(n, 4);
    out.cloud.sh_coeffs.resize(n, cloud.sh_coeffs.cols());
    out.cloud.opacity_logits.resize(n);
    out.cloud.max_sampling_rate.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out.cloud.positions.row(i) = rows_pos[i];
        out.cloud.log_scales.row(i) = rows_ls[i];
        out.cloud.rotations.row(i) = rows_rot[i];
        out.cloud.sh_coeffs.row(i) = rows_sh[i];
        out.cloud.opacity_logits(i) = logits[i];
        out.cloud.max_sampling_rate(i) = vhat[i];
    }
    out.source_index = std::move(src);
    return out;
}

}  // namespace sags
