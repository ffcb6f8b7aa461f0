#include "sags/rasterizer.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <atomic>
#include <numeric>
#include <thread>

namespace sags {

namespace {

struct TileGrid {
    int tiles_x = 0, tiles_y = 0, tile_size = 16;
    // per tile, depth-ordered positions into `order`
    std::vector<std::vector<int>> lists;
};

// Conservative per-splat screen radius: cutoff sigmas of the largest
// eigenvalue of the 2D covariance (inverse of the conic).
double splat_radius(double ca, double cb, double cc, double cutoff) {
    double det = ca * cc - cb * cb;
    if (det <= 0) return 0;
    // eigenvalues of cov = (conic eigenvalues)^-1
    double mid = 0.5 * (ca + cc);
    double disc = std::sqrt(std::max(0.0, mid * mid - det));
    double lam_min_conic = mid - disc;  // smallest conic eigenvalue
    if (lam_min_conic <= 0) return 0;
    return cutoff * std::sqrt(1.0 / lam_min_conic);
}

std::vector<int> depth_order(const Eigen::MatrixXd& packed, const std::vector<char>& valid) {
    std::vector<int> order;
    const int n = static_cast<int>(packed.rows());
    order.reserve(n);
    for (int i = 0; i < n; ++i)
        if (valid[static_cast<size_t>(i)]) order.push_back(i);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        double za = packed(a, 9), zb = packed(b, 9);
        if (za != zb) return za < zb;
        return a < b;
    });
    return order;
}

TileGrid build_tiles(const Eigen::MatrixXd& packed, const std::vector<int>& order, int width,
                     int height, const RenderConfig& cfg) {
    TileGrid g;
    g.tile_size = cfg.tile_size;
    g.tiles_x = (width + cfg.tile_size - 1) / cfg.tile_size;
    g.tiles_y = (height + cfg.tile_size - 1) / cfg.tile_size;
    g.lists.resize(static_cast<size_t>(g.tiles_x) * g.tiles_y);
    for (size_t pos = 0; pos < order.size(); ++pos) {
        int i = order[pos];
        double r = splat_radius(packed(i, 2), packed(i, 3), packed(i, 4), cfg.sigma_cutoff);
        if (r <= 0) continue;
        double u = packed(i, 0), v = packed(i, 1);
        int x0 = std::max(0, static_cast<int>(std::floor((u - r) / cfg.tile_size)));
        int x1 = std::min(g.tiles_x - 1, static_cast<int>(std::floor((u + r) / cfg.tile_size)));
        int y0 = std::max(0, static_cast<int>(std::floor((v - r) / cfg.tile_size)));
        int y1 = std::min(g.tiles_y - 1, static_cast<int>(std::floor((v + r) / cfg.tile_size)));
        if (u + r < 0 || u - r > width - 1 || v + r < 0 || v - r > height - 1) continue;
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                g.lists[static_cast<size_t>(ty) * g.tiles_x + tx].push_back(static_cast<int>(pos));
    }
    return g;
}

void parallel_tiles(int n_tiles, int workers, const std::function<void(int)>& body) {
    if (workers <= 1 || n_tiles <= 1) {
        for (int t = 0; t < n_tiles; ++t) body(t);
        return;
    }
    std::vector<std::thread> threads;
    std::atomic<int> next{0};
    int nw = std::min(workers, n_tiles);
    for (int w = 0; w < nw; ++w) {
        threads.emplace_back([&]() {
            for (int t = next.fetch_add(1); t < n_tiles; t = next.fetch_add(1)) body(t);
        });
    }
    for (auto& th : threads) th.join();
}

struct Contribution {
    int pos;       // position in the depth order
    double alpha;  // after clamp
    double g;      // Gaussian falloff
    double t;      // transmittance before this contribution
    bool clamped;
};

// Shared per-pixel compositing.  `candidates` are positions into `order`,
// already depth-sorted.  When `record` is non-null the per-contribution state
// needed by the adjoint is captured.
void composite_pixel(const Eigen::MatrixXd& packed, const std::vector<int>& order,
                     const std::vector<int>& candidates, double px, double py,
                     const Eigen::Vector3d& bg, const RenderConfig& cfg, double* color_out,
                     double* depth_acc_out, double* alpha_out, double* depth_out,
                     std::vector<Contribution>* record, double* t_end_out) {
    const double q_cut = cfg.sigma_cutoff * cfg.sigma_cutoff;
    double t = 1.0;
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    double d_acc = 0, a_acc = 0;
    for (int pos : candidates) {
        int i = order[static_cast<size_t>(pos)];
        double dx = px - packed(i, 0);
        double dy = py - packed(i, 1);
        double q = packed(i, 2) * dx * dx + 2 * packed(i, 3) * dx * dy + packed(i, 4) * dy * dy;
        if (q > q_cut || q < 0) continue;
        double g = std::exp(-0.5 * q);
        double a_raw = packed(i, 8) * g;
        bool clamped = a_raw > cfg.alpha_clamp;
        double a = clamped ? cfg.alpha_clamp : a_raw;
        if (a <= 0) continue;
        c += Eigen::Vector3d(packed(i, 5), packed(i, 6), packed(i, 7)) * (a * t);
        d_acc += packed(i, 9) * a * t;
        a_acc += a * t;
        if (record) record->push_back({pos, a, g, t, clamped});
        t *= 1.0 - a;
        if (cfg.early_stop && cfg.transmittance_eps > 0 && t < cfg.transmittance_eps) break;
    }
    c += bg * t;
    if (color_out) {
        color_out[0] = c.x();
        color_out[1] = c.y();
        color_out[2] = c.z();
    }
    if (depth_acc_out) *depth_acc_out = d_acc;
    if (alpha_out) *alpha_out = a_acc;
    if (depth_out) *depth_out = (a_acc > 1e-6) ? d_acc / a_acc : 0.0;
    if (t_end_out) *t_end_out = t;
}

}  // namespace

RasterForward raster_forward(const Eigen::MatrixXd& packed, const std::vector<char>& valid,
                             int width, int height, const Eigen::Vector3d& background,
                             const RenderConfig& cfg, bool tiled) {
    if (packed.cols() != kSplatCols) throw InputError("raster: packed splats must have 10 columns");
    if (valid.size() != static_cast<size_t>(packed.rows()))
        throw InputError("raster: validity mask size mismatch");

    RasterForward fwd;
    fwd.order = depth_order(packed, valid);
    RenderOutput& out = fwd.out;
    out.width = width;
    out.height = height;
    out.color.assign(static_cast<size_t>(width) * height * 3, 0.0);
    out.depth.assign(static_cast<size_t>(width) * height, 0.0);
    out.alpha.assign(static_cast<size_t>(width) * height, 0.0);
    out.depth_acc.assign(static_cast<size_t>(width) * height, 0.0);

    if (!tiled) {
        std::vector<int> all(fwd.order.size());
        std::iota(all.begin(), all.end(), 0);
        RenderConfig bf = cfg;
        bf.early_stop = false;
        for (int row = 0; row < height; ++row) {
            for (int col = 0; col < width; ++col) {
                size_t p = static_cast<size_t>(row) * width + col;
                composite_pixel(packed, fwd.order, all, col, row, background, bf,
                                &out.color[p * 3], &out.depth_acc[p], &out.alpha[p], &out.depth[p],
                                nullptr, nullptr);
            }
        }
        return fwd;
    }

    TileGrid grid = build_tiles(packed, fwd.order, width, height, cfg);
    int n_tiles = grid.tiles_x * grid.tiles_y;
    parallel_tiles(n_tiles, cfg.workers, [&](int tile) {
        int tx = tile % grid.tiles_x, ty = tile / grid.tiles_x;
        const auto& list = grid.lists[static_cast<size_t>(tile)];
        int row1 = std::min(height, (ty + 1) * grid.tile_size);
        int col1 = std::min(width, (tx + 1) * grid.tile_size);
        for (int row = ty * grid.tile_size; row < row1; ++row) {
            for (int col = tx * grid.tile_size; col < col1; ++col) {
                size_t p = static_cast<size_t>(row) * width + col;
                composite_pixel(packed, fwd.order, list, col, row, background, cfg,
                                &out.color[p * 3], &out.depth_acc[p], &out.alpha[p], &out.depth[p],
                                nullptr, nullptr);
            }
        }
    });
    return fwd;
}

Eigen::MatrixXd raster_backward(const Eigen::MatrixXd& packed, const std::vector<char>& valid,
                                int width, int height, const Eigen::Vector3d& background,
                                const RenderConfig& cfg, const std::vector<double>& grad_color,
                                const std::vector<double>& grad_depth_acc,
                                const std::vector<double>& grad_alpha) {
    if (grad_color.size() != static_cast<size_t>(width) * height * 3 ||
        grad_depth_acc.size() != static_cast<size_t>(width) * height ||
        grad_alpha.size() != static_cast<size_t>(width) * height)
        throw InputError("raster_backward: upstream gradient size mismatch");

    std::vector<int> order = depth_order(packed, valid);
    TileGrid grid = build_tiles(packed, order, width, height, cfg);
    int n_tiles = grid.tiles_x * grid.tiles_y;

    // Per-tile local gradients over the tile's own candidate list; merged in
    // tile index order afterwards so results do not depend on worker count.
    std::vector<std::vector<std::array<double, kSplatCols>>> tile_grads(
        static_cast<size_t>(n_tiles));

    parallel_tiles(n_tiles, cfg.workers, [&](int tile) {
        const auto& list = grid.lists[static_cast<size_t>(tile)];
        auto& local = tile_grads[static_cast<size_t>(tile)];
        local.assign(list.size(), {});
        if (list.empty()) return;
        int tx = tile % grid.tiles_x, ty = tile / grid.tiles_x;
        int row1 = std::min(height, (ty + 1) * grid.tile_size);
        int col1 = std::min(width, (tx + 1) * grid.tile_size);
        std::vector<Contribution> contribs;
        for (int row = ty * grid.tile_size; row < row1; ++row) {
            for (int col = tx * grid.tile_size; col < col1; ++col) {
                size_t p = static_cast<size_t>(row) * width + col;
                contribs.clear();
                double t_end = 1.0;
                composite_pixel(packed, order, list, col, row, background, cfg, nullptr, nullptr,
                                nullptr, nullptr, &contribs, &t_end);
                if (contribs.empty()) continue;
                Eigen::Vector3d d_color(grad_color[p * 3], grad_color[p * 3 + 1],
                                        grad_color[p * 3 + 2]);
                double d_dacc = grad_depth_acc[p];
                double d_alpha = grad_alpha[p];
                double bg_dot = background.dot(d_color);

                // suffix sums over later contributions: S_w = sum T_j a_j w_j
                double suffix_w = t_end * bg_dot;  // the bg*T_end term behaves like the tail
                for (size_t kk = contribs.size(); kk-- > 0;) {
                    const Contribution& cb = contribs[kk];
                    int i = order[static_cast<size_t>(cb.pos)];
                    Eigen::Vector3d ci(packed(i, 5), packed(i, 6), packed(i, 7));
                    double w_i = ci.dot(d_color) + packed(i, 9) * d_dacc + d_alpha;
                    double at = cb.alpha * cb.t;

                    // find the local slot: list is depth-ordered positions; binary search
                    auto it = std::lower_bound(list.begin(), list.end(), cb.pos);
                    size_t slot = static_cast<size_t>(it - list.begin());
                    auto& gr = local[slot];

                    // color and depth
                    gr[5] += at * d_color.x();
                    gr[6] += at * d_color.y();
                    gr[7] += at * d_color.z();
                    gr[9] += at * d_dacc;

                    double d_a = cb.t * w_i - suffix_w / (1.0 - cb.alpha);
                    suffix_w += at * w_i;

                    if (cb.clamped) continue;  // alpha pinned at the clamp
                    double d_op = cb.g * d_a;
                    double d_g = packed(i, 8) * d_a;
                    double d_q = -0.5 * cb.g * d_g;
                    double dx = col - packed(i, 0);
                    double dy = row - packed(i, 1);
                    gr[8] += d_op;
                    gr[2] += d_q * dx * dx;
                    gr[3] += d_q * 2 * dx * dy;
                    gr[4] += d_q * dy * dy;
                    gr[0] += d_q * (-2 * packed(i, 2) * dx - 2 * packed(i, 3) * dy);
                    gr[1] += d_q * (-2 * packed(i, 3) * dx - 2 * packed(i, 4) * dy);
                }
            }
        }
    });

    Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(packed.rows(), kSplatCols);
    for (int tile = 0; tile < n_tiles; ++tile) {
        const auto& list = grid.lists[static_cast<size_t>(tile)];
        const auto& local = tile_grads[static_cast<size_t>(tile)];
        for (size_t s = 0; s < list.size(); ++s) {
            int i = order[static_cast<size_t>(list[s])];
            for (int c = 0; c < kSplatCols; ++c) grad(i, c) += local[s][c];
        }
    }
    return grad;
}

namespace {

Eigen::MatrixXd pack_splats(const std::vector<SplatView>& splats, std::vector<char>& valid,
                            long& skipped) {
    Eigen::MatrixXd packed(static_cast<Eigen::Index>(splats.size()), kSplatCols);
    valid.assign(splats.size(), 1);
    skipped = 0;
    for (size_t i = 0; i < splats.size(); ++i) {
        const SplatView& s = splats[i];
        double det = s.cov.determinant();
        Eigen::Index r = static_cast<Eigen::Index>(i);
        if (det <= 0) {
            valid[i] = 0;
            ++skipped;
            packed.row(r).setZero();
            continue;
        }
        double inv_det = 1.0 / det;
        packed(r, 0) = s.mean.x();
        packed(r, 1) = s.mean.y();
        packed(r, 2) = s.cov(1, 1) * inv_det;
        packed(r, 3) = -s.cov(0, 1) * inv_det;
        packed(r, 4) = s.cov(0, 0) * inv_det;
        packed(r, 5) = s.color.x();
        packed(r, 6) = s.color.y();
        packed(r, 7) = s.color.z();
        packed(r, 8) = s.opacity;
        packed(r, 9) = s.z;
    }
    return packed;
}

}  // namespace

RenderOutput render(const std::vector<SplatView>& splats, int width, int height,
                    const Eigen::Vector3d& background, const RenderConfig& cfg) {
    std::vector<char> valid;
    long skipped = 0;
    Eigen::MatrixXd packed = pack_splats(splats, valid, skipped);
    RasterForward fwd = raster_forward(packed, valid, width, height, background, cfg, true);
    fwd.out.skipped_singular = skipped;
    return fwd.out;
}

RenderOutput render_bruteforce(const std::vector<SplatView>& splats, int width, int height,
                               const Eigen::Vector3d& background, const RenderConfig& cfg) {
    std::vector<char> valid;
    long skipped = 0;
    Eigen::MatrixXd packed = pack_splats(splats, valid, skipped);
    RasterForward fwd = raster_forward(packed, valid, width, height, background, cfg, false);
    fwd.out.skipped_singular = skipped;
    return fwd.out;
}

}  // namespace sags
