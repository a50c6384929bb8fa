#pragma once

#include <cstdint>
#include <vector>

#include "vmf/types.hpp"

namespace vmf {

/// Hand-crafted per-pixel or per-point descriptors standing in for learned
/// encoders. 2D maps are row-major interleaved; LiDAR maps use width = point
/// count, height = 1, and carry the point positions for neighbor lookups.
struct FeatureMap {
    int width = 0;
    int height = 0;
    int channels = 0;
    Modality modality = Modality::Rgb;
    std::vector<double> data;
    std::vector<Vec3> positions;  // LiDAR only

    std::size_t index(int x, int y, int c) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    double at(int x, int y, int c) const { return data[index(x, y, c)]; }
};

struct FeatureSpec {
    double density_radius = 0.5;  // meters; local density feature support
    double nn_max_dist = 0.75;    // meters; correlation lookups farther than this score kSentinel
};

/// Image/voxel-slice features: [value, |grad x|, |grad y|, 3x3 mean] per
/// input plane (so RGB maps carry 12 channels), each channel standardized to
/// zero mean and unit variance over the frame (sigma floor 1e-6).
FeatureMap encode_features(const Image& img);

/// LiDAR features: [x, y, z, local point density within density_radius],
/// standardized per cloud the same way.
FeatureMap encode_features(const PointCloud& pc, const FeatureSpec& spec);

/// Uniform sample (without replacement) of points that project inside the
/// frame; if fewer than n candidates exist they are all taken once. Output is
/// sorted by point index and deterministic under the seed.
SampleSet sample_points(const PointCloud& pc, int n, const CameraIntrinsics& K, std::uint64_t seed);

struct Correlation2D {
    CorrelationVolume x;
    CorrelationVolume y;
};

/// Per-sample axis correlation profiles between two 2D feature maps. f2 is
/// first warped by init_flow (backward bilinear); profile bin d holds
/// <f1(s), f2w(s + d * axis)> / sqrt(C). Lookups outside the frame score
/// kSentinel. slice_index tags event volumes.
Correlation2D build_correlation_2d(const FeatureMap& f1, const FeatureMap& f2, const SampleSet& samples,
                                   const FlowField2D& init_flow, int radius, int slice_index = -1);

/// Quantized displacement values per axis, each of length 2r+1, ascending.
struct AxisOffsets {
    std::vector<double> x;
    std::vector<double> y;
    std::vector<double> z;
};

/// Offsets of (base + i) * (median_depth / f) meters, i in [-r, r]: one
/// metric step projects to one pixel at the median depth, which keeps the
/// LiDAR profiles index-aligned with the 2D pixel grid. base_dx/base_dy
/// recenter the x/y grids on a coarse displacement estimate; z is always
/// centered on zero.
AxisOffsets matched_axis_offsets(int radius, double focal, double median_depth, int base_dx = 0, int base_dy = 0);

/// Coarse whole-frame alignment: the integer displacement in [-radius,
/// radius]^2 maximizing the mean feature dot product between the maps.
/// Profiles built around this base read residual displacement, which the
/// zero-orthogonal axis slices need.
std::pair<int, int> estimate_global_shift(const FeatureMap& f1, const FeatureMap& f2, int radius);

struct Correlation3D {
    CorrelationVolume x;
    CorrelationVolume y;
    CorrelationVolume z;
};

/// Per-sample axis correlation of LiDAR features: bin d of axis a holds
/// <f1(p), f2(nn(p + offset_a[d] * e_a))> / sqrt(C) with nn the nearest
/// point of cloud 2; no neighbor within nn_max_dist scores kSentinel.
Correlation3D build_correlation_3d(const FeatureMap& f1, const FeatureMap& f2, const SampleSet& samples,
                                   const AxisOffsets& offsets, double nn_max_dist);

/// Softmax over the finite entries of one profile. Sentinel bins get
/// probability 0; all-sentinel profiles return all zeros.
std::vector<double> softmax_profile(const double* scores, int bins, double temperature = 1.0);

struct KlAlignmentLoss {
    double value = 0.0;
    std::vector<double> grad_lidar_x, grad_lidar_y;
    std::vector<double> grad_rgb_x, grad_rgb_y;
    std::vector<std::vector<double>> grad_event_x, grad_event_y;  // one per slice

    int skipped_terms = 0;  // profile pairs with no common finite support
};

/// Sum over the x and y axes of KL(softmax(lidar) || softmax(rgb)) plus the
/// per-slice average of KL(softmax(lidar) || softmax(event_i)), averaged over
/// samples. Each KL term normalizes both profiles over their common finite
/// support. Gradients are w.r.t. the raw correlation scores.
KlAlignmentLoss kl_alignment_loss(const Correlation3D& lidar, const Correlation2D& rgb,
                                  const std::vector<Correlation2D>& event_slices);

struct FusedCorrelation {
    CorrelationVolume x;
    CorrelationVolume y;
    CorrelationVolume z;
};

/// Fused profiles: per bin, (1/T) sum_i (rgb + event_i + lidar) / 3 on the x
/// and y axes; z is the LiDAR z profile unchanged. A sentinel in any
/// contributor makes the fused bin a sentinel.
FusedCorrelation fuse_correlation(const Correlation2D& rgb, const std::vector<Correlation2D>& event_slices,
                                  const Correlation3D& lidar);

/// Temperature-controlled expectation readout: per axis,
/// flow = sum_d softmax(corr/tau)_d * offset_d. Samples whose x or y profile
/// is all-sentinel are marked invalid and carry zero flow.
FlowField3D soft_argmax_flow(const FusedCorrelation& corr, const AxisOffsets& offsets, double tau);

/// Readout of a single 2D modality (x/y profiles over pixel displacements).
struct SampleFlow2D {
    std::vector<double> du;
    std::vector<double> dv;
    std::vector<std::uint8_t> valid;
};
SampleFlow2D soft_argmax_flow_2d(const Correlation2D& corr, double tau, int base_dx = 0, int base_dy = 0);

struct WarpedImage {
    Image image;
    std::vector<std::uint8_t> valid;  // 0 where x + U(x) left the frame
};

/// Backward bilinear warp: out(x) = img(x + flow(x)); out-of-bounds samples
/// produce 0 and clear the validity bit.
WarpedImage warp_image(const Image& img, const FlowField2D& flow);

/// Additive displacement of sampled positions; invalid samples pass through.
std::vector<Vec3> warp_points(const std::vector<Vec3>& positions, const FlowField3D& flow);

/// Forward-backward consistency mask. Valid where
/// |fwd(x) + bwd(x + fwd(x))| <= tau, with bwd looked up bilinearly. When
/// tau_occ <= 0 the adaptive rule 0.01 + 0.05 * (|fwd|^2 + |bwd|^2) applies.
Image occlusion_mask_2d(const FlowField2D& fwd, const FlowField2D& bwd, double tau_occ = -1.0);

/// 3D analogue with nearest-sample lookup: sample i (position p, flow d) is
/// valid when |d + bwd_flow(nn(p + d))| <= tau over the backward sample set.
std::vector<std::uint8_t> occlusion_mask_3d(const std::vector<Vec3>& fwd_positions, const FlowField3D& fwd,
                                            const std::vector<Vec3>& bwd_positions, const FlowField3D& bwd,
                                            double tau_occ = -1.0);

struct PhotometricLoss {
    double value = 0.0;
    double value_2d = 0.0;
    double value_3d = 0.0;
    std::vector<double> grad_du, grad_dv;  // dense, width*height
    std::vector<Vec3> grad_flow3d;         // per sample
};

/// Generalized Charbonnier penalty (x^2 + eps^2)^(p/2) - eps^p with p = 0.4,
/// eps = 1e-3, so psi(0) = 0 and the penalty is smooth everywhere.
double charbonnier(double x);
double charbonnier_derivative(double x);

/// Masked mean psi(frame_t - warp(frame_t2)) over pixels plus, when sampled
/// positions are supplied, the masked mean of psi applied per coordinate of
/// (p + flow) - nn(p + flow) over the t2 cloud. Gradients flow through the
/// bilinear warp and psi; the nearest-neighbor association is treated as
/// locally constant.
PhotometricLoss photometric_loss(const Image& frame_t, const Image& frame_t2, const FlowField2D& flow2d,
                                 const Image& mask2d, const std::vector<Vec3>& sample_positions_t,
                                 const PointCloud& cloud_t2, const FlowField3D& flow3d,
                                 const std::vector<std::uint8_t>& mask3d);

}  // namespace vmf
