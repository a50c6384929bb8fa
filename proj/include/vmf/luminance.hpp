#pragma once

#include <cstdint>
#include <vector>

#include "vmf/types.hpp"

namespace vmf {

/// Per-pixel sum of polarity * threshold over events inside [t0, t1]
/// (inclusive). Pixels with no events stay 0. Counts are accumulated as
/// integers and scaled once, so the result is exact.
Image accumulate_intensity(const EventStream& ev, double threshold, double t0, double t1);

inline Image accumulate_intensity(const EventStream& ev, double threshold) {
    return accumulate_intensity(ev, threshold, ev.t_begin, ev.t_end);
}

struct FusedLuma {
    Image image;           // LUMA in [0,1]
    int clamp_count = 0;   // pixels whose pre-clamp blend left [0,1]
};

/// Weighted blend (rgb_w * I_Y + event_w * I_X) / (rgb_w + event_w), clamped
/// to [0,1]. Weights are applied as rgb_w/s and event_w/s so the blend is
/// exactly symmetric under swapping (weight, plane) pairs and reduces
/// bit-exactly to I_Y when event_w is 0.
FusedLuma fuse_luminance(const Image& luma, const Image& intensity, const FusionWeights& w);

/// Reattaches chroma to a fused luma plane (BT.601 inverse).
Image recombine_color(const Image& fused_luma, const Image& u, const Image& v);

struct AdversarialLoss {
    double value = 0.0;
    std::vector<double> grad_scores_t;
    std::vector<double> grad_scores_t2;
};

/// Mean of log(1 - D) over the two score lists taken together. Scores must
/// lie strictly in (0,1).
AdversarialLoss adversarial_loss(const std::vector<double>& scores_t, const std::vector<double>& scores_t2);

struct ResidualMap {
    Image residual;                       // scalar map
    std::vector<std::uint8_t> in_bounds;  // 0 where x + U(x) left the frame
};

/// Spatiotemporal residual: warp(E, U)(x) + grad(I)(x) . U(x). The image
/// gradient uses central differences with replicated borders; the warp term
/// samples E bilinearly at x + U(x) and contributes 0 out of bounds.
ResidualMap spatiotemporal_residual(const Image& luma, const Image& event_frame, const FlowField2D& flow);

struct ConsistencyLoss {
    double value = 0.0;
    std::vector<double> grad_du;
    std::vector<double> grad_dv;
};

/// Masked mean absolute spatiotemporal residual with analytic gradient
/// w.r.t. the flow (through both the bilinear warp and the grad(I) . U
/// term). d|r|/dr at r = 0 is taken as 0.
ConsistencyLoss consistency_loss(const Image& luma, const Image& event_frame, const FlowField2D& flow,
                                 const Image& mask);

/// Mask is 1 where x + U(x) stays in frame and at least one event fired at x
/// inside the stream's window.
Image valid_mask(const FlowField2D& flow, const EventStream& ev);

}  // namespace vmf
