#pragma once

#include "vmf/types.hpp"

namespace vmf {

/// Masked mean endpoint (Euclidean) error in pixels.
double metric_epe(const FlowField2D& pred, const FlowField2D& gt, const Image& mask);

/// Masked percentage of pixels with endpoint error strictly below threshold.
double metric_acc(const FlowField2D& pred, const FlowField2D& gt, const Image& mask, double threshold_px);

/// 3D analogues over a sampled flow set, in meters.
double metric_epe(const FlowField3D& pred, const std::vector<Vec3>& gt, const std::vector<std::uint8_t>& mask);
double metric_acc(const FlowField3D& pred, const std::vector<Vec3>& gt, const std::vector<std::uint8_t>& mask,
                  double threshold_m);

}  // namespace vmf
