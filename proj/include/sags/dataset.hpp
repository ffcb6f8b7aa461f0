#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "sags/camera.hpp"
#include "sags/errors.hpp"
#include "sags/gaussian_cloud.hpp"

namespace sags {

struct Frame {
    std::string image_path;  // absolute
    std::string depth_path;
    std::string mask_path;  // empty when absent
    CameraModel camera;
    double time = 0;
    bool test = false;
};

struct SceneDataset {
    std::string root;
    int width = 0, height = 0;
    Eigen::Vector3d aabb_min = Eigen::Vector3d::Constant(-1);
    Eigen::Vector3d aabb_max = Eigen::Vector3d::Constant(1);
    double t0 = 0, t1 = 1;
    std::vector<Frame> frames;

    std::vector<int> train_indices() const;
    std::vector<int> test_indices() const;
};

// Reads `scene.json` under `dir`.  When no frame carries an explicit split
// flag, every 8th frame is held out for testing.
SceneDataset load_scene(const std::string& dir);

// Per-primitive sinusoidal displacement of a teacher cloud:
// mu_i(t) = mu_i + amplitude_i * sin(2 pi frequency_i t + phase_i).
struct TeacherMotion {
    Eigen::MatrixXd amplitude;  // N x 3
    Eigen::VectorXd frequency;  // N
    Eigen::VectorXd phase;      // N
};

GaussianCloud deform_teacher(const GaussianCloud& cloud, const TeacherMotion& motion, double t);

struct SyntheticSpec {
    int frame_count = 24;
    int width = 64, height = 64;
    int teacher_count = 300;
    double motion_amplitude = 0.08;  // scene units, per-axis envelope
    double motion_frequency = 1.0;   // cycles over [0,1]
    std::string layout = "random";   // "random" | "checkerboard"
    int checker_cells = 8;           // checkerboard squares per side
    uint64_t seed = 1;

    void validate() const;
};

SyntheticSpec load_synthetic_spec(const std::string& path);

// Builds the teacher scene, renders every frame with the brute-force
// renderer (color + expected depth), and writes the load_scene layout plus
// `teacher.ckpt` under `out_dir`.
struct SyntheticResult {
    SceneDataset dataset;
    std::string teacher_checkpoint;
};

SyntheticResult generate_synthetic(const SyntheticSpec& spec, const std::string& out_dir);

}  // namespace sags
