#pragma once

#include "vmf/types.hpp"

namespace vmf {

/// Bilinear lookup at a fractional pixel position. `in_bounds` is false when
/// the position leaves [0, w-1] x [0, h-1]; value and derivatives are then 0.
/// dx/dy are the derivatives of the interpolated value w.r.t. the position.
struct BilinearSample {
    double value = 0.0;
    double dx = 0.0;
    double dy = 0.0;
    bool in_bounds = false;
};

BilinearSample bilinear_sample(const Image& img, double px, double py, int channel = 0);

inline bool sample_in_bounds(const Image& img, double px, double py) {
    return px >= 0.0 && px <= static_cast<double>(img.width - 1) && py >= 0.0 &&
           py <= static_cast<double>(img.height - 1);
}

/// Pinhole projection u = f*x/z + cx, v = f*y/z + cy, d = z. Points behind
/// the camera or projecting outside (0,w) x (0,h) are dropped. When two
/// points round to the same pixel the nearer depth survives.
ProjectedPoints project_points(const PointCloud& pc, const CameraIntrinsics& K);

/// Back-projects every pixel with depth > 0 to camera coordinates.
PointCloud backproject_depth(const Image& depth, const CameraIntrinsics& K);

/// Rounded pixel for splatting a projected entry, clamped into the raster.
inline int splat_x(double u, int width) { return std::min(width - 1, std::max(0, static_cast<int>(std::llround(u)))); }
inline int splat_y(double v, int height) { return std::min(height - 1, std::max(0, static_cast<int>(std::llround(v)))); }

}  // namespace vmf
