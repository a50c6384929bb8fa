#pragma once

#include <string>
#include <vector>

#include "vmf/config.hpp"
#include "vmf/correlation.hpp"
#include "vmf/synthetic.hpp"
#include "vmf/types.hpp"

namespace vmf {

/// Pipeline outcome. Everything here is deterministic for a fixed
/// (config, seed); wall-clock timings are kept out of the serialized forms.
struct Report {
    // Loss values; total_loss composes them with the lambda weights.
    double loss_pho = 0.0;
    double loss_adv = 0.0;
    double loss_consis = 0.0;
    double loss_pse = 0.0;
    double loss_kl = 0.0;
    double loss_total = 0.0;
    bool adv_scores_supplied = false;
    bool pse_predictions_supplied = false;

    // Metrics against ground truth, when the scene carries it.
    bool has_gt = false;
    double epe_2d = 0.0;  // pixels
    double acc_2d = 0.0;  // percent within 1 px
    double epe_3d = 0.0;  // meters
    double acc_3d = 0.0;  // percent within 5 cm

    // Stage statistics.
    int clamp_count_t = 0;
    int clamp_count_t2 = 0;
    double coverage_before = 0.0;  // nonzero-depth fraction of event-active pixels
    double coverage_after = 0.0;
    int cluster_count = 0;
    double cluster_objective = 0.0;
    double median_sample_depth = 0.0;
    int valid_samples = 0;
    int sample_total = 0;
    int kl_skipped_terms = 0;
    int event_count = 0;

    bool luminance_on = false;
    bool structure_on = false;
    bool motion_fusion_on = false;

    // Console-only timing; never serialized.
    double seconds_total = 0.0;
};

/// Total objective: pho + l1*adv + l2*consis + l3*pse + l4*kl.
double total_loss(double pho, double adv, double consis, double pse, double kl, double lambda1, double lambda2,
                  double lambda3, double lambda4);

/// Canonical `key: value` serialization (no timing).
std::string report_text(const Report& r);
/// Machine-readable JSON form (no timing).
std::string report_json(const Report& r);

struct PipelineResult {
    Report report;
    FlowField2D flow2d;        // sparse: valid at sample pixels
    FlowField2D flow2d_dense;  // nearest-sample densification
    FlowField3D flow3d;
    SampleSet samples;
    Image fused_depth_t;  // empty when the structure stage is disabled
};

/// Runs luminance fusion, structure fusion, correlation fusion and the
/// soft-argmax readout on the configured scene. Emits report and artifact
/// files into cfg.output_dir when set. Stage failures rethrow with the stage
/// name attached.
PipelineResult run_pipeline(const PipelineConfig& cfg);

/// Dense nearest-valid-sample fill of a scattered flow field.
FlowField2D densify_flow(const FlowField2D& sparse);

}  // namespace vmf
