#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <string>

#include "sags/antialias.hpp"
#include "sags/dataset.hpp"
#include "sags/decoder.hpp"
#include "sags/gaussian_cloud.hpp"
#include "sags/hexplane.hpp"

namespace sags {

// Versioned little-endian container.  Two payload kinds share the format:
// learned models (field + decoder) and analytic teacher scenes (sinusoid
// motion table).  Sections are length-framed so corruption errors can name
// the section that failed.
struct Checkpoint {
    enum class Kind { learned, analytic };

    Kind kind = Kind::learned;
    std::string mode = "full";  // full | no_filters | no_sad | baseline | teacher
    uint64_t config_hash = 0;
    uint64_t iteration = 0;

    GaussianCloud cloud;
    FilterConfig filters;

    // learned payload
    HexPlaneField field;
    SadDecoder decoder;

    // analytic payload
    TeacherMotion motion;

    // optimizer slots (Adam moments keyed by parameter name) + step counter
    std::map<std::string, std::pair<Eigen::MatrixXd, Eigen::MatrixXd>> adam;
    uint64_t adam_step = 0;
};

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);  // atomic rename

// `expected_mode` empty accepts anything; otherwise a mode mismatch is a
// ConfigError unless allow_mode_mismatch is set.
Checkpoint load_checkpoint(const std::string& path, const std::string& expected_mode = "",
                           bool allow_mode_mismatch = false);

uint64_t fnv1a(const std::string& s);

}  // namespace sags
