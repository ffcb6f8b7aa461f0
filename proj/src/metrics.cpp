#include "sags/metrics.hpp"

#include <cmath>

namespace sags {

PsnrResult psnr(const std::vector<double>& a, const std::vector<double>& b, double peak) {
    if (a.size() != b.size() || a.empty()) throw InputError("psnr: buffer sizes disagree");
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    PsnrResult r;
    r.mse = acc / static_cast<double>(a.size());
    if (r.mse == 0) {
        r.infinite = true;
        r.psnr = 999.0;
        return r;
    }
    r.psnr = 10.0 * std::log10(peak * peak / r.mse);
    return r;
}

namespace {

constexpr int kWin = 11;

Eigen::MatrixXd gaussian_window() {
    Eigen::MatrixXd w(kWin, kWin);
    const double sigma = 1.5;
    double sum = 0;
    for (int i = 0; i < kWin; ++i)
        for (int j = 0; j < kWin; ++j) {
            double di = i - (kWin - 1) / 2.0, dj = j - (kWin - 1) / 2.0;
            w(i, j) = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            sum += w(i, j);
        }
    return w / sum;
}

}  // namespace

double ssim(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double peak) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw InputError("ssim: image sizes disagree");
    if (a.rows() < kWin || a.cols() < kWin)
        throw InputError("ssim: images must be at least 11x11");

    static const Eigen::MatrixXd w = gaussian_window();
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);

    double acc = 0;
    long count = 0;
    for (int r = 0; r + kWin <= a.rows(); ++r)
        for (int c = 0; c + kWin <= a.cols(); ++c) {
            auto pa = a.block(r, c, kWin, kWin);
            auto pb = b.block(r, c, kWin, kWin);
            double mu_a = (w.array() * pa.array()).sum();
            double mu_b = (w.array() * pb.array()).sum();
            double var_a = (w.array() * pa.array().square()).sum() - mu_a * mu_a;
            double var_b = (w.array() * pb.array().square()).sum() - mu_b * mu_b;
            double cov = (w.array() * (pa.array() * pb.array())).sum() - mu_a * mu_b;
            double num = (2 * mu_a * mu_b + c1) * (2 * cov + c2);
            double den = (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2);
            acc += num / den;
            ++count;
        }
    return acc / static_cast<double>(count);
}

double ssim_rgb(const std::vector<double>& a, const std::vector<double>& b, int width, int height,
                double peak) {
    if (a.size() != static_cast<size_t>(width) * height * 3 || a.size() != b.size())
        throw InputError("ssim: buffer sizes disagree");
    double acc = 0;
    for (int ch = 0; ch < 3; ++ch) {
        Eigen::MatrixXd ma(height, width), mb(height, width);
        for (int r = 0; r < height; ++r)
            for (int c = 0; c < width; ++c) {
                size_t idx = (static_cast<size_t>(r) * width + c) * 3 + ch;
                ma(r, c) = a[idx];
                mb(r, c) = b[idx];
            }
        acc += ssim(ma, mb, peak);
    }
    return acc / 3.0;
}

}  // namespace sags
