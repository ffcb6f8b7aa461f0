#include "sags/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>

namespace sags {

double quantize8(double v) {
    double c = std::min(std::max(v, 0.0), 1.0);
    return std::round(c * 255.0) / 255.0;
}

namespace {

struct FileCloser {
    void operator()(FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<FILE, FileCloser>;

}  // namespace

Image load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw InputError("png: cannot open " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InputError("png: read struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw InputError("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw InputError("png: failed to decode " + path);
    }

    png_init_io(png, fp.get());
    png_read_info(png, info);

    png_uint_32 w = png_get_image_width(png, info);
    png_uint_32 h = png_get_image_height(png, info);
    int color_type = png_get_color_type(png, info);
    int bit_depth = png_get_bit_depth(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    std::vector<png_byte> raw(static_cast<size_t>(w) * h * 3);
    std::vector<png_bytep> rows(h);
    for (png_uint_32 r = 0; r < h; ++r) rows[r] = raw.data() + static_cast<size_t>(r) * w * 3;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img;
    img.width = static_cast<int>(w);
    img.height = static_cast<int>(h);
    img.data.resize(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = raw[i] / 255.0;
    return img;
}

void save_png(const Image& img, const std::string& path) {
    if (img.width <= 0 || img.height <= 0 ||
        img.data.size() != static_cast<size_t>(img.width) * img.height * 3)
        throw InputError("png: image buffer does not match its dimensions");

    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw InputError("png: cannot write " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw InputError("png: write struct allocation failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw InputError("png: info struct allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw InputError("png: failed to encode " + path);
    }

    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
    for (int r = 0; r < img.height; ++r) {
        for (int c = 0; c < img.width; ++c)
            for (int ch = 0; ch < 3; ++ch) {
                double v = std::min(std::max(img.at(r, c, ch), 0.0), 1.0);
                row[static_cast<size_t>(c) * 3 + ch] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Eigen::MatrixXd load_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("pfm: cannot open " + path);

    std::string magic;
    in >> magic;
    if (magic != "Pf") throw InputError("pfm: " + path + " is not a single-channel PFM");
    int w = 0, h = 0;
    double scale = 0;
    in >> w >> h >> scale;
    if (!in || w <= 0 || h <= 0) throw InputError("pfm: bad header in " + path);
    if (scale >= 0) throw InputError("pfm: big-endian data is not supported (" + path + ")");
    in.get();  // single whitespace byte terminating the header

    std::vector<float> buf(static_cast<size_t>(w) * h);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!in) throw InputError("pfm: truncated pixel data in " + path);

    Eigen::MatrixXd out(h, w);
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c)
            out(h - 1 - r, c) = buf[static_cast<size_t>(r) * w + c];  // bottom row first on disk
    return out;
}

void save_pfm(const Eigen::MatrixXd& depth, const std::string& path) {
    const int h = static_cast<int>(depth.rows());
    const int w = static_cast<int>(depth.cols());
    if (h <= 0 || w <= 0) throw InputError("pfm: empty depth map");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("pfm: cannot write " + path);
    out << "Pf\n" << w << " " << h << "\n-1.0\n";
    std::vector<float> row(static_cast<size_t>(w));
    for (int r = h - 1; r >= 0; --r) {
        for (int c = 0; c < w; ++c) row[static_cast<size_t>(c)] = static_cast<float>(depth(r, c));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw InputError("pfm: write failed for " + path);
}

}  // namespace sags
