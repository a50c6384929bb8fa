#pragma once

#include <string>

#include "vmf/types.hpp"

namespace vmf {

/// Event text format: one `t x y p` line per event, `#` comments. The saver
/// emits a `# width W height H window T0 T1` comment; the loader uses it
/// when present and otherwise infers geometry from the data.
EventStream load_events(const std::string& path);
void save_events(const EventStream& ev, const std::string& path);

/// Point cloud text format: one `x y z` line per point, `#` comments.
PointCloud load_point_cloud(const std::string& path);
void save_point_cloud(const PointCloud& pc, const std::string& path, const std::string& header_comment = "");

/// PNM rasters: P5 for single-channel, P6 for RGB, 8- or 16-bit. Depth maps
/// are stored as 16-bit P5 quantized to millimeters and flagged with a
/// `# depth millimeters` header comment, which the loader also recognizes.
Image load_image(const std::string& path);
void save_image(const Image& img, const std::string& path, int bits = 8);

/// Binary 2D flow: magic "VMFL", little-endian u32 width/height, f32 (du,dv)
/// pairs row-major, then one validity byte per pixel.
FlowField2D load_flow(const std::string& path);
void save_flow(const FlowField2D& flow, const std::string& path);

/// Debug dump of one correlation volume: a `#` header naming N, r, axis,
/// modality and slice, then one float32-precision row per sample.
void save_correlation_dump(const CorrelationVolume& cv, const std::string& path);

/// Standard flow color wheel rendering. Magnitudes are scaled by `max_mag`
/// (auto-detected when <= 0); invalid pixels render black.
Image flow_visualization(const FlowField2D& flow, double max_mag = 0.0);

}  // namespace vmf
