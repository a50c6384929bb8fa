#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmf/types.hpp"

namespace vmf {

/// Event stream collapsed along time: one (u, v, polarity) entry per event,
/// duplicates retained.
struct Event2DPoints {
    struct Entry {
        double u = 0.0;
        double v = 0.0;
        int p = 1;
    };
    std::vector<Entry> entries;

    std::size_t size() const { return entries.size(); }
};

Event2DPoints normalize_event_coords(const EventStream& ev);

struct DistanceParams {
    double spatial_norm = 32.0;  // N_s, max spatial distance normalizer in pixels

    void validate() const;
};

/// Joint similarity distance between two points carrying a scalar feature
/// (event polarity, or depth / d_max for LiDAR):
/// sqrt((f1-f2)^2 + (euclidean(u,v) / N_s)^2).
double joint_distance(double u1, double v1, double f1, double u2, double v2, double f2,
                      const DistanceParams& params);

/// Largest projected depth, used to normalize LiDAR depth features. Returns
/// 1 for an empty set.
double max_depth(const ProjectedPoints& lidar);

/// Joint event+LiDAR clustering result. The objective is the total squared
/// joint distance of every point to its assigned center; it is non-increasing
/// across iterations.
struct ClusterMap {
    struct Center {
        double u = 0.0;
        double v = 0.0;
        double feature = 0.0;
    };

    int cluster_count = 0;
    bool reduced = false;      // requested K exceeded the point count
    double window_pitch = 0.0; // assignment search window half-size (seeding pitch)
    std::vector<int> event_assignment;
    std::vector<int> lidar_assignment;
    std::vector<Center> centers;
    double objective = 0.0;
    std::vector<double> objective_history;  // objective after each iteration
};

/// Lloyd-style alternation with grid-seeded centers. Assignment is restricted
/// to a 2S x 2S window around each center (S = seeding pitch); points keep
/// their previous cluster when no windowed center improves on it, so the
/// objective never increases. The seed parameter is accepted for interface
/// stability; seeding is deterministic and does not consume it.
ClusterMap cluster_neighbors(const Event2DPoints& events, const ProjectedPoints& lidar, int width, int height,
                             int k_clusters, int iters, const DistanceParams& params, std::uint64_t seed = 0);

/// Event -> LiDAR structure completion: each LiDAR entry pulls the k most
/// similar co-clustered event coordinates (cross-modal joint distance, ties
/// by insertion order) and appends them as densified entries carrying the
/// donor's depth and source -1. Original entries are never removed.
ProjectedPoints fill_boundary(const ProjectedPoints& lidar, const Event2DPoints& events, const ClusterMap& clusters,
                              int k, const DistanceParams& params);

/// LiDAR -> event depth fusion: every event coordinate receives an
/// inverse-distance weighted blend of its k most similar co-clustered LiDAR
/// depths (weights 1/(D + 1e-6), normalized); LiDAR entries splat their own
/// depths. Collisions resolve to the nearer depth; untouched pixels stay 0.
Image fuse_depth(const ProjectedPoints& lidar, const Event2DPoints& events, const ClusterMap& clusters, int k,
                 const CameraIntrinsics& K, const DistanceParams& params);

struct PseudoLabelLoss {
    double value = 0.0;
    std::vector<double> grad_pred_t;
    std::vector<double> grad_pred_t2;
};

/// Sum over both frames of the mean L1 depth error on pixels whose pseudo
/// label is positive. Gradient w.r.t. each prediction is sign/count on those
/// pixels.
PseudoLabelLoss pseudo_label_loss(const Image& pred_t, const Image& pse_t, const Image& pred_t2,
                                  const Image& pse_t2);

/// Debug dump: per-pixel cluster id (+1, background 0) as a 16-bit PGM.
void save_cluster_label_image(const ClusterMap& clusters, const Event2DPoints& events, const ProjectedPoints& lidar,
                              int width, int height, const std::string& path);

/// Debug dump: densified (u, v, d) rows in the point-cloud text format.
void save_densified(const ProjectedPoints& densified, const std::string& path);

}  // namespace vmf
