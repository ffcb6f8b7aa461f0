#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sags/errors.hpp"
#include "sags/sh.hpp"

namespace sags {

// Explicit scene state.  Scales live in the log domain and opacity in the
// logit domain so positivity/(0,1) hold structurally under unconstrained
// optimization.
struct GaussianCloud {
    Eigen::MatrixXd positions;           // N x 3
    Eigen::MatrixXd log_scales;          // N x 3
    Eigen::MatrixXd rotations;           // N x 4, raw (w,x,y,z), normalized on use
    Eigen::MatrixXd sh_coeffs;           // N x 3K, column = k*3 + channel
    Eigen::VectorXd opacity_logits;      // N
    Eigen::VectorXd max_sampling_rate;   // N, v-hat cache (pixels per scene unit); 0 = unset
    int sh_degree = 2;

    int size() const { return static_cast<int>(positions.rows()); }
    int sh_count() const { return sh_coeff_count(sh_degree); }

    // K x 3 view of primitive i's coefficients.
    Eigen::MatrixXd sh_matrix(int i) const;

    void validate() const;  // throws InputError on shape mismatches
};

GaussianCloud init_from_points(const Eigen::MatrixXd& points, const Eigen::MatrixXd& colors,
                               double subsample_fraction, uint64_t seed, int sh_degree = 2);

struct DensifyConfig {
    double opacity_min = 0.005;
    double grad_threshold = 2e-4;
    double scale_split_threshold = 0.01;  // absolute scene units
    double split_factor = 1.6;
};

struct DensifyResult {
    GaussianCloud cloud;
    // For each output primitive, the index of the source primitive it was
    // derived from (kept, cloned, or split).  Lets the optimizer carry state.
    std::vector<int> source_index;
};

DensifyResult densify_and_prune(const GaussianCloud& cloud, const Eigen::VectorXd& grad_accum,
                                const DensifyConfig& cfg, uint64_t seed);

void save_ply(const GaussianCloud& cloud, const std::string& path);
GaussianCloud load_ply(const std::string& path);

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace sags
