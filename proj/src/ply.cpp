#include <algorithm>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

#include "sags/gaussian_cloud.hpp"

namespace sags {

namespace {

std::vector<std::string> property_names(int sh_count) {
    std::vector<std::string> names = {"x", "y", "z", "scale_0", "scale_1", "scale_2",
                                      "rot_0", "rot_1", "rot_2", "rot_3",
                                      "f_dc_0", "f_dc_1", "f_dc_2"};
    for (int j = 0; j < 3 * (sh_count - 1); ++j) names.push_back("f_rest_" + std::to_string(j));
    names.push_back("opacity");
    return names;
}

int degree_from_property_count(size_t n_props) {
    // 14 fixed properties + 3*(K-1) rest channels
    for (int deg = 0; deg <= 3; ++deg) {
        size_t k = static_cast<size_t>(sh_coeff_count(deg));
        if (n_props == 14 + 3 * (k - 1)) return deg;
    }
    return -1;
}

[[noreturn]] void parse_fail(const std::string& path, std::streamoff offset, const std::string& msg) {
    std::ostringstream os;
    os << "ply: " << path << " (byte " << offset << "): " << msg;
    throw InputError(os.str());
}

}  // namespace

void save_ply(const GaussianCloud& cloud, const std::string& path) {
    cloud.validate();
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("ply: cannot open for writing: " + path);

    const int n = cloud.size();
    const int k = cloud.sh_count();
    f << "ply\nformat binary_little_endian 1.0\n";
    f << "element vertex " << n << "\n";
    for (const auto& name : property_names(k)) f << "property double " << name << "\n";
    f << "end_header\n";

    std::vector<double> row(14 + 3 * (k - 1));
    for (int i = 0; i < n; ++i) {
        size_t p = 0;
        for (int c = 0; c < 3; ++c) row[p++] = cloud.positions(i, c);
        for (int c = 0; c < 3; ++c) row[p++] = cloud.log_scales(i, c);
        for (int c = 0; c < 4; ++c) row[p++] = cloud.rotations(i, c);
        for (int c = 0; c < 3; ++c) row[p++] = cloud.sh_coeffs(i, c);
        for (int j = 1; j < k; ++j)
            for (int c = 0; c < 3; ++c) row[p++] = cloud.sh_coeffs(i, j * 3 + c);
        row[p++] = cloud.opacity_logits(i);
        f.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(double)));
    }
    if (!f) throw InputError("ply: write failed: " + path);
}

GaussianCloud load_ply(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("ply: cannot open: " + path);

    std::string line;
    auto next_line = [&](std::string& out) {
        if (!std::getline(f, out)) parse_fail(path, f.tellg(), "unexpected end of header");
    };

    next_line(line);
    if (line != "ply") parse_fail(path, 0, "missing 'ply' magic");
    next_line(line);
    if (line != "format binary_little_endian 1.0")
        parse_fail(path, f.tellg(), "expected format binary_little_endian 1.0");

    long long n = -1;
    std::vector<std::string> props;
    std::vector<bool> is_double;
    while (true) {
        next_line(line);
        std::istringstream ls(line);
        std::string tok;
        ls >> tok;
        if (tok == "comment") continue;
        if (tok == "element") {
            std::string what;
            ls >> what >> n;
            if (what != "vertex" || n < 0) parse_fail(path, f.tellg(), "expected 'element vertex N'");
        } else if (tok == "property") {
            std::string type, name;
            ls >> type >> name;
            if (type != "double" && type != "float")
                parse_fail(path, f.tellg(), "unsupported property type '" + type + "'");
            props.push_back(name);
            is_double.push_back(type == "double");
        } else if (tok == "end_header") {
            break;
        } else {
            parse_fail(path, f.tellg(), "unrecognized header line '" + line + "'");
        }
    }
    if (n < 0) parse_fail(path, f.tellg(), "missing vertex element");

    int degree = degree_from_property_count(props.size());
    if (degree < 0) {
        // If the list is a prefix of a known layout, name the missing property.
        for (int deg = 3; deg >= 0; --deg) {
            auto names = property_names(sh_coeff_count(deg));
            if (props.size() < names.size() &&
                std::equal(props.begin(), props.end(), names.begin()))
                parse_fail(path, f.tellg(), "missing property '" + names[props.size()] + "'");
        }
        parse_fail(path, f.tellg(),
                   "unexpected property count " + std::to_string(props.size()));
    }
    auto expected = property_names(sh_coeff_count(degree));
    for (size_t i = 0; i < props.size(); ++i) {
        if (props[i] != expected[i])
            parse_fail(path, f.tellg(),
                       "expected property '" + expected[i] + "', found '" + props[i] + "'");
    }

    GaussianCloud c;
    c.sh_degree = degree;
    const int k = c.sh_count();
    c.positions.resize(n, 3);
    c.log_scales.resize(n, 3);
    c.rotations.resize(n, 4);
    c.sh_coeffs.resize(n, 3 * k);
    c.opacity_logits.resize(n);
    c.max_sampling_rate = Eigen::VectorXd::Zero(n);

    std::vector<double> row(props.size());
    for (long long i = 0; i < n; ++i) {
        for (size_t p = 0; p < props.size(); ++p) {
            if (is_double[p]) {
                double v;
                if (!f.read(reinterpret_cast<char*>(&v), sizeof(double)))
                    parse_fail(path, f.tellg(), "truncated payload at vertex " + std::to_string(i));
                row[p] = v;
            } else {
                float v;
                if (!f.read(reinterpret_cast<char*>(&v), sizeof(float)))
                    parse_fail(path, f.tellg(), "truncated payload at vertex " + std::to_string(i));
                row[p] = v;
            }
        }
        size_t p = 0;
        for (int ch = 0; ch < 3; ++ch) c.positions(i, ch) = row[p++];
        for (int ch = 0; ch < 3; ++ch) c.log_scales(i, ch) = row[p++];
        for (int ch = 0; ch < 4; ++ch) c.rotations(i, ch) = row[p++];
        for (int ch = 0; ch < 3; ++ch) c.sh_coeffs(i, ch) = row[p++];
        for (int j = 1; j < k; ++j)
            for (int ch = 0; ch < 3; ++ch) c.sh_coeffs(i, j * 3 + ch) = row[p++];
        c.opacity_logits(i) = row[p++];
    }
    return c;
}

}  // namespace sags
