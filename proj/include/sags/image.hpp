#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sags/errors.hpp"

namespace sags {

// Row-major RGB image, values in [0,1], top-left origin.
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;  // H*W*3

    double& at(int row, int col, int c) {
        return data[(static_cast<size_t>(row) * width + col) * 3 + c];
    }
    double at(int row, int col, int c) const {
        return data[(static_cast<size_t>(row) * width + col) * 3 + c];
    }
};

// 8-bit RGB PNG.  Values are clamped and rounded on save; grayscale and
// RGBA inputs are expanded/stripped on load.
Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

// Single-channel PFM, float32 little-endian (scale header -1.0), rows stored
// bottom-to-top per the format convention.  The returned matrix is indexed
// (row, col) from the top-left like Image.
Eigen::MatrixXd load_pfm(const std::string& path);
void save_pfm(const Eigen::MatrixXd& depth, const std::string& path);

// Round-trip a [0,1] value through the 8-bit quantizer used by save_png.
double quantize8(double v);

}  // namespace sags
