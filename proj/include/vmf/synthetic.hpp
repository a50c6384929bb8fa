#pragma once

#include <cstdint>
#include <string>

#include "vmf/config.hpp"
#include "vmf/types.hpp"

namespace vmf {

/// Desk-scale multimodal test scene with exact ground truth. Frames are
/// rendered analytically from a procedural texture so the geometry, flow,
/// depth, occlusion and events are all mutually consistent by construction.
struct SyntheticScene {
    CameraIntrinsics K;
    Image frame_t;   // RGB as the camera sees it (low-light degraded when enabled)
    Image frame_t2;
    Image clean_luma_t;   // pre-degradation luma; events derive from these.
    Image clean_luma_t2;  // Not part of the on-disk scene.
    EventStream events;
    PointCloud cloud_t;
    PointCloud cloud_t2;
    Image gt_depth_t;    // dense, meters
    FlowField2D gt_flow; // dense frame1 -> frame2 optical flow
    Vec3 translation;    // rigid scene translation = GT scene flow of every point
    Image gt_occlusion;  // 1 where the frame-1 pixel has a clean frame-2 correspondence
    Image beam_mask;     // 1 on pixels carrying LiDAR returns in frame 1
    double event_threshold = 0.0;  // C used to quantize the events

    /// Consistency checks run after generation: event quantization bound,
    /// flow/projection agreement, warp reproduction on non-occluded pixels.
    void self_check() const;
};

/// Renders the scene described by the generator config. The event threshold
/// quantizes per-pixel luma change into events; the seed drives the texture
/// and the low-light noise.
SyntheticScene generate_synthetic(const GeneratorConfig& cfg, double event_threshold, std::uint64_t seed);

/// Scene directory layout: frame_t.ppm, frame_t2.ppm, events.txt,
/// cloud_t.txt, cloud_t2.txt, gt_depth_t.pgm, gt_flow.vmfl,
/// gt_occlusion.pgm, beam_mask.pgm, scene.cfg.
void save_scene(const SyntheticScene& scene, const std::string& dir);
SyntheticScene load_scene(const std::string& dir);

}  // namespace vmf
