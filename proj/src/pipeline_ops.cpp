#include "sags/pipeline_ops.hpp"

#include <cmath>

#include "sags/geometry.hpp"
#include "sags/sh.hpp"

namespace sags {

namespace {

double axis_range(const HexPlaneField& field, int axis) {
    if (axis < 3) return field.aabb_max(axis) - field.aabb_min(axis);
    return field.t1 - field.t0;
}

// unclamped normalized coordinate, used to detect clamp saturation
double raw_coord(const HexPlaneField& field, const Eigen::Vector3d& mu, double t, int axis) {
    if (axis < 3) return (mu(axis) - field.aabb_min(axis)) / axis_range(field, axis);
    return (t - field.t0) / axis_range(field, axis);
}

}  // namespace

ad::Var hexplane_encode_op(ad::Tape& tape, const std::array<ad::Var, 6>& planes,
                           ad::Var positions, const HexPlaneField& field, double t) {
    const Eigen::MatrixXd& pos = tape.value(positions);
    const int n = static_cast<int>(pos.rows());
    const int h = field.feature_dim;

    Eigen::MatrixXd out(n, h);
    for (int i = 0; i < n; ++i) {
        Eigen::Vector4d q = field.normalize(pos.row(i).transpose(), t);
        Eigen::ArrayXd acc = Eigen::ArrayXd::Ones(h);
        for (int p = 0; p < 6; ++p) {
            auto [d1, d2] = field.resolution[static_cast<size_t>(p)];
            acc *= sample_plane(tape.value(planes[static_cast<size_t>(p)]), d1, d2,
                                q(kPlaneAxes[p][0]), q(kPlaneAxes[p][1]))
                       .array();
        }
        out.row(i) = acc.transpose();
    }

    std::vector<ad::Var> parents(planes.begin(), planes.end());
    parents.push_back(positions);
    HexPlaneField fld = field;
    return tape.make_node(out, parents, [planes, positions, fld, t, n, h](ad::Tape& tp, int self) {
        const Eigen::MatrixXd& g = tp.grad({self});
        const Eigen::MatrixXd& pos = tp.value(positions);

        std::array<Eigen::MatrixXd, 6> gplane;
        for (int p = 0; p < 6; ++p)
            gplane[static_cast<size_t>(p)] =
                Eigen::MatrixXd::Zero(tp.value(planes[static_cast<size_t>(p)]).rows(), h);
        Eigen::MatrixXd gpos = Eigen::MatrixXd::Zero(n, 3);

        for (int i = 0; i < n; ++i) {
            Eigen::Vector3d mu = pos.row(i).transpose();
            Eigen::Vector4d q = fld.normalize(mu, t);
            std::array<Eigen::ArrayXd, 6> f;
            for (int p = 0; p < 6; ++p) {
                auto [d1, d2] = fld.resolution[static_cast<size_t>(p)];
                f[static_cast<size_t>(p)] =
                    sample_plane(tp.value(planes[static_cast<size_t>(p)]), d1, d2,
                                 q(kPlaneAxes[p][0]), q(kPlaneAxes[p][1]))
                        .array();
            }
            // leave-one-out products for the element-wise fusion
            std::array<Eigen::ArrayXd, 7> pre, suf;
            pre[0] = Eigen::ArrayXd::Ones(h);
            suf[6] = Eigen::ArrayXd::Ones(h);
            for (int p = 0; p < 6; ++p) pre[static_cast<size_t>(p + 1)] = pre[static_cast<size_t>(p)] * f[static_cast<size_t>(p)];
            for (int p = 5; p >= 0; --p) suf[static_cast<size_t>(p)] = suf[static_cast<size_t>(p + 1)] * f[static_cast<size_t>(p)];

            Eigen::ArrayXd grow = g.row(i).transpose().array();
            for (int p = 0; p < 6; ++p) {
                Eigen::VectorXd gf =
                    (grow * pre[static_cast<size_t>(p)] * suf[static_cast<size_t>(p + 1)]).matrix();
                auto [d1, d2] = fld.resolution[static_cast<size_t>(p)];
                double gu = 0, gv = 0;
                sample_plane_backward(tp.value(planes[static_cast<size_t>(p)]), d1, d2,
                                      q(kPlaneAxes[p][0]), q(kPlaneAxes[p][1]), gf,
                                      gplane[static_cast<size_t>(p)], gu, gv);
                for (int side = 0; side < 2; ++side) {
                    int axis = kPlaneAxes[p][side];
                    if (axis >= 3) continue;  // time is not a parameter
                    double raw = raw_coord(fld, mu, t, axis);
                    if (raw <= 0.0 || raw >= 1.0) continue;  // clamp saturated
                    gpos(i, axis) += (side == 0 ? gu : gv) / axis_range(fld, axis);
                }
            }
        }

        for (int p = 0; p < 6; ++p)
            if (tp.requires_grad(planes[static_cast<size_t>(p)]))
                tp.grad_ref(planes[static_cast<size_t>(p)]) += gplane[static_cast<size_t>(p)];
        if (tp.requires_grad(positions)) tp.grad_ref(positions) += gpos;
    });
}

ad::Var pad_cols_op(ad::Tape& tape, ad::Var x, int total, int at) {
    const Eigen::MatrixXd& xv = tape.value(x);
    const int n = static_cast<int>(xv.cols());
    if (at < 0 || at + n > total) throw ConfigError("pad_cols: slice out of range");
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(xv.rows(), total);
    out.middleCols(at, n) = xv;
    return tape.make_node(out, {x}, [x, at, n](ad::Tape& tp, int self) {
        if (tp.requires_grad(x))
            tp.grad_ref(x) += tp.grad({self}).middleCols(at, n);
    });
}

ad::Var total_variation_op(ad::Tape& tape, ad::Var plane, int d1, int d2) {
    const Eigen::MatrixXd& p = tape.value(plane);
    if (p.rows() != static_cast<Eigen::Index>(d1) * d2)
        throw ConfigError("total_variation: plane storage does not match its resolution");
    const int h = static_cast<int>(p.cols());
    auto row = [d2](int i, int j) { return static_cast<Eigen::Index>(i) * d2 + j; };

    double acc = 0;
    long terms = (static_cast<long>(d1 - 1) * d2 + static_cast<long>(d1) * (d2 - 1)) * h;
    for (int i = 0; i < d1; ++i)
        for (int j = 0; j < d2; ++j) {
            if (i + 1 < d1) acc += (p.row(row(i + 1, j)) - p.row(row(i, j))).squaredNorm();
            if (j + 1 < d2) acc += (p.row(row(i, j + 1)) - p.row(row(i, j))).squaredNorm();
        }
    double value = acc / static_cast<double>(terms);

    return tape.make_node(Eigen::MatrixXd::Constant(1, 1, value), {plane},
                          [plane, d1, d2, terms, row](ad::Tape& tp, int self) {
                              if (!tp.requires_grad(plane)) return;
                              double gs = tp.grad({self})(0, 0) * 2.0 / static_cast<double>(terms);
                              const Eigen::MatrixXd& p = tp.value(plane);
                              Eigen::MatrixXd& g = tp.grad_ref(plane);
                              for (int i = 0; i < d1; ++i)
                                  for (int j = 0; j < d2; ++j) {
                                      if (i + 1 < d1) {
                                          Eigen::RowVectorXd d =
                                              gs * (p.row(row(i + 1, j)) - p.row(row(i, j)));
                                          g.row(row(i + 1, j)) += d;
                                          g.row(row(i, j)) -= d;
                                      }
                                      if (j + 1 < d2) {
                                          Eigen::RowVectorXd d =
                                              gs * (p.row(row(i, j + 1)) - p.row(row(i, j)));
                                          g.row(row(i, j + 1)) += d;
                                          g.row(row(i, j)) -= d;
                                      }
                                  }
                          });
}

// ---- per-primitive projection chain ----

namespace {

struct PerSplat {
    bool valid = false;
    bool singular = false;
    Eigen::Vector3d s;
    Eigen::Matrix3d rot, m, cov3, cov3f;
    double amp3 = 1, det3 = 0, det3f = 0;
    Eigen::Vector3d p_cam;
    Eigen::Matrix<double, 2, 3> jac, t;
    Eigen::Matrix2d cov2, cov2m, conic;
    double amp2 = 1, det2 = 0, det2m = 0;
    Eigen::Vector3d dir;
    double dir_norm = 1;
    Eigen::Vector3d color_raw, color;
    double sig = 0;
    Eigen::Matrix<double, 1, kSplatCols> row;
};

PerSplat prepare_one(const Eigen::Vector3d& mu, const Eigen::Vector3d& log_s,
                     const Eigen::Vector4d& q_raw, const Eigen::VectorXd& sh_row, double logit_v,
                     const CameraModel& cam, const FilterConfig& filt, double vhat, int degree) {
    PerSplat ps;
    ps.row.setZero();

    ps.p_cam = cam.to_camera(mu);
    if (ps.p_cam.z() <= cam.near) return ps;

    ps.s = log_s.array().exp();
    ps.rot = quat_to_rotation({q_raw(0), q_raw(1), q_raw(2), q_raw(3)});
    ps.m = ps.rot * ps.s.asDiagonal();
    ps.cov3 = ps.m * ps.m.transpose();
    ps.det3 = ps.cov3.determinant();

    double s3d_eff = filt.enable3d ? filt.s3d : 0.0;
    Filtered3 f3 = smooth_3d(ps.cov3, vhat, s3d_eff);
    ps.cov3f = f3.cov;
    ps.amp3 = f3.amplitude;
    ps.det3f = ps.cov3f.determinant();

    ps.jac = projection_jacobian(cam, ps.p_cam);
    ps.t = ps.jac * cam.rotation;
    ps.cov2 = ps.t * ps.cov3f * ps.t.transpose();
    ps.det2 = ps.cov2.determinant();

    double s2d_eff = filt.enable2d ? filt.s2d : 0.0;
    Filtered2 f2 = mip_2d(ps.cov2, s2d_eff);
    ps.cov2m = f2.cov;
    ps.amp2 = f2.amplitude;
    ps.det2m = ps.cov2m.determinant();
    if (ps.det2m <= 0) {
        ps.singular = true;
        return ps;
    }
    ps.conic = ps.cov2m.inverse();

    Eigen::Vector3d w = mu - cam.camera_center();
    ps.dir_norm = w.norm();
    ps.dir = (ps.dir_norm > 1e-12) ? Eigen::Vector3d(w / ps.dir_norm)
                                   : Eigen::Vector3d(0, 0, 1);
    Eigen::VectorXd basis = sh_basis(degree, ps.dir);
    const int k = static_cast<int>(basis.size());
    for (int c = 0; c < 3; ++c) {
        double acc = 0.5;
        for (int j = 0; j < k; ++j) acc += sh_row(j * 3 + c) * basis(j);
        ps.color_raw(c) = acc;
        ps.color(c) = std::min(std::max(acc, 0.0), 1.0);
    }

    ps.sig = sigmoid(logit_v);

    double z = ps.p_cam.z();
    ps.row(0) = cam.fx * ps.p_cam.x() / z + cam.cx;
    ps.row(1) = cam.fy * ps.p_cam.y() / z + cam.cy;
    ps.row(2) = ps.conic(0, 0);
    ps.row(3) = ps.conic(0, 1);
    ps.row(4) = ps.conic(1, 1);
    ps.row(5) = ps.color(0);
    ps.row(6) = ps.color(1);
    ps.row(7) = ps.color(2);
    ps.row(8) = ps.sig * ps.amp3 * ps.amp2;
    ps.row(9) = z;
    ps.valid = true;
    return ps;
}

// ddet/dS for a symmetric 2x2 (full-matrix form, valid for symmetric motion)
Eigen::Matrix2d det_grad2(const Eigen::Matrix2d& s) {
    Eigen::Matrix2d g;
    g << s(1, 1), -s(1, 0), -s(0, 1), s(0, 0);
    return g;
}

void backward_one(const PerSplat& ps, const Eigen::Vector3d& mu, const Eigen::Vector4d& q_raw,
                  const Eigen::VectorXd& sh_row, const CameraModel& cam, const FilterConfig& filt,
                  double vhat, int degree, const Eigen::Matrix<double, 1, kSplatCols>& g,
                  Eigen::Vector3d& g_mu, Eigen::Vector3d& g_logs, Eigen::Vector4d& g_q,
                  Eigen::VectorXd& g_sh, double& g_logit) {
    g_mu.setZero();
    g_logs.setZero();
    g_q.setZero();
    g_sh.setZero();
    g_logit = 0;

    const double s3d_eff = filt.enable3d ? filt.s3d : 0.0;
    const double s2d_eff = filt.enable2d ? filt.s2d : 0.0;
    (void)vhat;
    (void)mu;

    // opacity = sigmoid(logit) * amp3 * amp2
    const double dop = g(8);
    g_logit = dop * ps.amp3 * ps.amp2 * ps.sig * (1.0 - ps.sig);
    const double damp3 = dop * ps.sig * ps.amp2;
    const double damp2 = dop * ps.sig * ps.amp3;

    // conic = cov2m^{-1}; seed through the symmetric (a, b, c) packing
    Eigen::Matrix2d u;
    u << g(2), g(3) * 0.5, g(3) * 0.5, g(4);
    Eigen::Matrix2d dcov2m = -ps.conic * u * ps.conic;

    Eigen::Matrix2d dcov2;
    if (s2d_eff > 0) {
        double g_det2 = (ps.det2 > 0) ? damp2 * ps.amp2 / (2.0 * ps.det2) : 0.0;
        double g_det2m = -damp2 * ps.amp2 / (2.0 * ps.det2m);
        dcov2m += g_det2m * det_grad2(ps.cov2m);
        dcov2 = dcov2m + g_det2 * det_grad2(ps.cov2);
    } else {
        dcov2 = dcov2m;
    }

    // cov2 = T cov3f T^T
    Eigen::Matrix3d dcov3f = ps.t.transpose() * dcov2 * ps.t;
    Eigen::Matrix<double, 2, 3> dt = (dcov2 + dcov2.transpose()) * ps.t * ps.cov3f;
    Eigen::Matrix<double, 2, 3> djac = dt * cam.rotation.transpose();

    // projection Jacobian entries depend on p_cam
    const double x = ps.p_cam.x(), y = ps.p_cam.y(), z = ps.p_cam.z();
    const double z2 = z * z, z3 = z2 * z;
    Eigen::Vector3d g_pc = Eigen::Vector3d::Zero();
    g_pc(0) += djac(0, 2) * (-cam.fx / z2);
    g_pc(1) += djac(1, 2) * (-cam.fy / z2);
    g_pc(2) += djac(0, 0) * (-cam.fx / z2) + djac(1, 1) * (-cam.fy / z2) +
               djac(0, 2) * (2.0 * cam.fx * x / z3) + djac(1, 2) * (2.0 * cam.fy * y / z3);

    // pixel position and depth
    g_pc(0) += g(0) * cam.fx / z;
    g_pc(2) += -g(0) * cam.fx * x / z2;
    g_pc(1) += g(1) * cam.fy / z;
    g_pc(2) += -g(1) * cam.fy * y / z2;
    g_pc(2) += g(9);
    g_mu += cam.rotation.transpose() * g_pc;

    // 3D smoothing amplitude
    Eigen::Matrix3d dcov3;
    if (s3d_eff > 0) {
        double g_det3 = (ps.det3 > 0) ? damp3 * ps.amp3 / (2.0 * ps.det3) : 0.0;
        double g_det3f = -damp3 * ps.amp3 / (2.0 * ps.det3f);
        Eigen::Matrix3d dcov3f_total = dcov3f + g_det3f * ps.det3f * ps.cov3f.inverse();
        dcov3 = dcov3f_total;
        if (g_det3 != 0) dcov3 += g_det3 * ps.det3 * ps.cov3.inverse();
    } else {
        dcov3 = dcov3f;
    }

    // cov3 = M M^T, M = R diag(s)
    Eigen::Matrix3d dm = (dcov3 + dcov3.transpose()) * ps.m;
    Eigen::Matrix3d drot = dm * ps.s.asDiagonal();
    for (int j = 0; j < 3; ++j) g_logs(j) = dm.col(j).dot(ps.rot.col(j)) * ps.s(j);
    auto jq = quat_rotation_jacobian(q_raw);
    for (int kq = 0; kq < 4; ++kq)
        g_q(kq) = (jq[static_cast<size_t>(kq)].array() * drot.array()).sum();

    // color: clamp(0.5 + coeffs^T basis(dir)), dir = (mu - cam_center)/|.|
    Eigen::VectorXd basis = sh_basis(degree, ps.dir);
    Eigen::MatrixXd bgrad = sh_basis_grad(degree, ps.dir);
    const int k = static_cast<int>(basis.size());
    Eigen::Vector3d ddir = Eigen::Vector3d::Zero();
    for (int c = 0; c < 3; ++c) {
        if (ps.color_raw(c) <= 0.0 || ps.color_raw(c) >= 1.0) continue;
        double gc = g(5 + c);
        if (gc == 0) continue;
        for (int j = 0; j < k; ++j) {
            g_sh(j * 3 + c) += gc * basis(j);
            ddir += gc * sh_row(j * 3 + c) * bgrad.row(j).transpose();
        }
    }
    if (ps.dir_norm > 1e-12) {
        Eigen::Matrix3d proj =
            (Eigen::Matrix3d::Identity() - ps.dir * ps.dir.transpose()) / ps.dir_norm;
        g_mu += proj * ddir;
    }
}

}  // namespace

PrepareResult splat_prepare_op(ad::Tape& tape, ad::Var positions, ad::Var log_scales,
                               ad::Var rotations, ad::Var sh, ad::Var logits,
                               const CameraModel& cam, const FilterConfig& filt,
                               const Eigen::VectorXd& vhat, int sh_degree) {
    filt.validate();
    const Eigen::MatrixXd& pos = tape.value(positions);
    const Eigen::MatrixXd& ls = tape.value(log_scales);
    const Eigen::MatrixXd& rot = tape.value(rotations);
    const Eigen::MatrixXd& shv = tape.value(sh);
    const Eigen::MatrixXd& lg = tape.value(logits);
    const int n = static_cast<int>(pos.rows());
    if (ls.rows() != n || rot.rows() != n || shv.rows() != n || lg.rows() != n)
        throw InputError("splat_prepare: attribute row counts disagree");
    if (vhat.size() != n) throw InputError("splat_prepare: sampling-rate cache has wrong length");

    PrepareResult res;
    res.valid.assign(static_cast<size_t>(n), 0);
    Eigen::MatrixXd packed = Eigen::MatrixXd::Zero(n, kSplatCols);
    for (int i = 0; i < n; ++i) {
        PerSplat ps =
            prepare_one(pos.row(i).transpose(), ls.row(i).transpose(), rot.row(i).transpose(),
                        shv.row(i).transpose(), lg(i, 0), cam, filt, vhat(i), sh_degree);
        if (ps.singular) ++res.skipped_singular;
        if (!ps.valid) continue;
        res.valid[static_cast<size_t>(i)] = 1;
        packed.row(i) = ps.row;
    }

    std::vector<char> valid = res.valid;
    res.packed = tape.make_node(
        packed, {positions, log_scales, rotations, sh, logits},
        [positions, log_scales, rotations, sh, logits, cam, filt, vhat, sh_degree, valid,
         n](ad::Tape& tp, int self) {
            const Eigen::MatrixXd& g = tp.grad({self});
            const Eigen::MatrixXd& pos = tp.value(positions);
            const Eigen::MatrixXd& ls = tp.value(log_scales);
            const Eigen::MatrixXd& rot = tp.value(rotations);
            const Eigen::MatrixXd& shv = tp.value(sh);
            const Eigen::MatrixXd& lg = tp.value(logits);

            Eigen::MatrixXd gp = Eigen::MatrixXd::Zero(n, 3);
            Eigen::MatrixXd gs = Eigen::MatrixXd::Zero(n, 3);
            Eigen::MatrixXd gr = Eigen::MatrixXd::Zero(n, 4);
            Eigen::MatrixXd gsh = Eigen::MatrixXd::Zero(n, shv.cols());
            Eigen::MatrixXd glg = Eigen::MatrixXd::Zero(n, 1);

            for (int i = 0; i < n; ++i) {
                if (!valid[static_cast<size_t>(i)]) continue;
                Eigen::Matrix<double, 1, kSplatCols> grow = g.row(i);
                if (grow.cwiseAbs().maxCoeff() == 0) continue;
                Eigen::Vector3d mu = pos.row(i).transpose();
                Eigen::Vector4d q = rot.row(i).transpose();
                Eigen::VectorXd sh_row = shv.row(i).transpose();
                PerSplat ps = prepare_one(mu, ls.row(i).transpose(), q, sh_row, lg(i, 0), cam,
                                          filt, vhat(i), sh_degree);
                Eigen::Vector3d g_mu, g_logs;
                Eigen::Vector4d g_q;
                Eigen::VectorXd g_sh(shv.cols());
                double g_logit;
                backward_one(ps, mu, q, sh_row, cam, filt, vhat(i), sh_degree, grow, g_mu, g_logs,
                             g_q, g_sh, g_logit);
                gp.row(i) = g_mu.transpose();
                gs.row(i) = g_logs.transpose();
                gr.row(i) = g_q.transpose();
                gsh.row(i) = g_sh.transpose();
                glg(i, 0) = g_logit;
            }

            if (tp.requires_grad(positions)) tp.grad_ref(positions) += gp;
            if (tp.requires_grad(log_scales)) tp.grad_ref(log_scales) += gs;
            if (tp.requires_grad(rotations)) tp.grad_ref(rotations) += gr;
            if (tp.requires_grad(sh)) tp.grad_ref(sh) += gsh;
            if (tp.requires_grad(logits)) tp.grad_ref(logits) += glg;
        });
    return res;
}

ad::Var rasterize_op(ad::Tape& tape, ad::Var packed, const std::vector<char>& valid, int width,
                     int height, const Eigen::Vector3d& background, const RenderConfig& cfg) {
    RasterForward fw = raster_forward(tape.value(packed), valid, width, height, background, cfg,
                                      /*tiled=*/true);
    const int hw = width * height;
    Eigen::MatrixXd out(hw, 5);
    for (int p = 0; p < hw; ++p) {
        out(p, 0) = fw.out.color[static_cast<size_t>(p) * 3 + 0];
        out(p, 1) = fw.out.color[static_cast<size_t>(p) * 3 + 1];
        out(p, 2) = fw.out.color[static_cast<size_t>(p) * 3 + 2];
        out(p, 3) = fw.out.depth_acc[static_cast<size_t>(p)];
        out(p, 4) = fw.out.alpha[static_cast<size_t>(p)];
    }

    std::vector<char> valid_copy = valid;
    return tape.make_node(
        out, {packed},
        [packed, valid_copy, width, height, background, cfg, hw](ad::Tape& tp, int self) {
            if (!tp.requires_grad(packed)) return;
            const Eigen::MatrixXd& g = tp.grad({self});
            std::vector<double> gc(static_cast<size_t>(hw) * 3), gd(static_cast<size_t>(hw)),
                ga(static_cast<size_t>(hw));
            for (int p = 0; p < hw; ++p) {
                gc[static_cast<size_t>(p) * 3 + 0] = g(p, 0);
                gc[static_cast<size_t>(p) * 3 + 1] = g(p, 1);
                gc[static_cast<size_t>(p) * 3 + 2] = g(p, 2);
                gd[static_cast<size_t>(p)] = g(p, 3);
                ga[static_cast<size_t>(p)] = g(p, 4);
            }
            tp.grad_ref(packed) += raster_backward(tp.value(packed), valid_copy, width, height,
                                                   background, cfg, gc, gd, ga);
        });
}

PreparedSplats prepare_splats(const GaussianCloud& cloud, const CameraModel& cam,
                              const FilterConfig& filt) {
    filt.validate();
    const int n = cloud.size();
    PreparedSplats out;
    out.valid.assign(static_cast<size_t>(n), 0);
    out.packed = Eigen::MatrixXd::Zero(n, kSplatCols);
    for (int i = 0; i < n; ++i) {
        double vhat = (cloud.max_sampling_rate.size() == n) ? cloud.max_sampling_rate(i) : 0.0;
        PerSplat ps = prepare_one(cloud.positions.row(i).transpose(),
                                  cloud.log_scales.row(i).transpose(),
                                  cloud.rotations.row(i).transpose(),
                                  cloud.sh_coeffs.row(i).transpose(), cloud.opacity_logits(i),
                                  cam, filt, vhat, cloud.sh_degree);
        if (ps.singular) ++out.skipped_singular;
        if (!ps.valid) continue;
        out.valid[static_cast<size_t>(i)] = 1;
        out.packed.row(i) = ps.row;
    }
    return out;
}

}  // namespace sags
