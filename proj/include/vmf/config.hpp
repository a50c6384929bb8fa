#pragma once

#include <cstdint>
#include <string>

namespace vmf {

/// Synthetic scene parameters. The scene is a textured fronto-parallel plane
/// with an optional occluding quad, both rigidly translated between frames;
/// LiDAR samples the ground-truth depth on a beam pattern.
struct GeneratorConfig {
    int width = 128;
    int height = 128;
    double focal = 128.0;  // pixels; principal point sits at the image center

    double plane_depth = 4.0;  // meters
    bool quad_enabled = true;
    double quad_depth = 2.0;
    double quad_x0 = 0.30, quad_y0 = 0.35;  // frame-1 footprint, fractional image coords
    double quad_x1 = 0.60, quad_y1 = 0.65;

    double translate_x = 0.0625;  // meters; 2 px at the default plane depth
    double translate_y = 0.0;
    double translate_z = 0.0;

    double window = 0.1;  // event window length, seconds

    int beam_step = 4;               // LiDAR returns on every beam_step-th row
    double beam_top_fraction = 0.25; // topmost rows carry no returns
    double lidar_reflectivity_floor = 0.32;  // returns require texture >= floor

    bool low_light = false;
    double low_light_gain = 0.25;
    double noise_sigma = 0.02;
};

struct PipelineConfig {
    // Loss weights (lambda 1..4 on adversarial, consistency, pseudo-label, KL).
    double lambda_adv = 1.0;
    double lambda_consis = 0.1;
    double lambda_pse = 1.0;
    double lambda_kl = 0.5;

    double event_threshold = 0.04;  // C
    int voxel_slices = 10;          // T
    int knn_k = 5;                  // k
    int sample_count = 1000;        // N
    int corr_radius = 4;            // r
    int cluster_count = 64;
    int cluster_iters = 10;
    double soft_argmax_tau = 0.05;
    double tau_occ = -1.0;      // <= 0 selects the adaptive consistency rule
    double spatial_norm = 32.0; // N_s
    double density_radius = 0.08;
    double nn_max_dist = 0.5;
    std::uint64_t seed = 7;

    bool enable_luminance = true;
    bool enable_structure = true;
    bool enable_motion_fusion = true;

    double fuse_event_weight = 1.0;
    double fuse_rgb_weight = 1.0;

    std::string scene_dir;          // load scene files from here; empty = generate in memory
    std::string output_dir;         // report and artifact destination; empty = no files
    std::string adv_scores_path;    // optional discriminator scores (two score lines)
    std::string pred_depth_t_path;  // optional external depth predictions for the
    std::string pred_depth_t2_path; // pseudo-label loss
    bool dump_debug = false;

    GeneratorConfig gen;

    void validate() const;
};

/// `key = value` text file, `#` comments, unknown keys rejected. Missing keys
/// keep their defaults.
PipelineConfig load_config(const std::string& path);
void save_config(const PipelineConfig& cfg, const std::string& path);

/// Applies one `key=value` override; throws InputError for unknown keys or
/// unparsable values.
void apply_override(PipelineConfig& cfg, const std::string& key, const std::string& value);

/// Full key list with current values, one `key = value` line each.
std::string config_text(const PipelineConfig& cfg);

}  // namespace vmf
