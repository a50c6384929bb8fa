#include "vmf/structure.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vmf/geometry.hpp"
#include "vmf/io.hpp"

namespace vmf {

namespace {

struct JointPoint {
    double u = 0.0;
    double v = 0.0;
    double feature = 0.0;
};

double joint_distance_sq(const JointPoint& a, const JointPoint& b, double inv_ns) {
    const double df = a.feature - b.feature;
    const double du = (a.u - b.u) * inv_ns;
    const double dv = (a.v - b.v) * inv_ns;
    return df * df + du * du + dv * dv;
}

std::vector<JointPoint> joint_points(const Event2DPoints& events, const ProjectedPoints& lidar) {
    std::vector<JointPoint> pts;
    pts.reserve(events.size() + lidar.entries.size());
    for (const auto& e : events.entries) pts.push_back({e.u, e.v, static_cast<double>(e.p)});
    const double dmax = max_depth(lidar);
    for (const auto& l : lidar.entries) pts.push_back({l.u, l.v, l.d / dmax});
    return pts;
}

// Smallest-k candidate selection with ties broken by insertion order.
struct Candidate {
    double dist;
    int index;
    bool operator<(const Candidate& o) const { return dist < o.dist || (dist == o.dist && index < o.index); }
};

}  // namespace

Event2DPoints normalize_event_coords(const EventStream& ev) {
    Event2DPoints out;
    out.entries.reserve(ev.events.size());
    for (const Event& e : ev.events)
        out.entries.push_back({static_cast<double>(e.x), static_cast<double>(e.y), e.p});
    return out;
}

void DistanceParams::validate() const {
    if (!(spatial_norm > 0.0)) throw InputError("distance params: N_s must be > 0");
}

double joint_distance(double u1, double v1, double f1, double u2, double v2, double f2,
                      const DistanceParams& params) {
    params.validate();
    const double dp = std::sqrt((f1 - f2) * (f1 - f2));
    const double ds = std::hypot(u1 - u2, v1 - v2);
    const double dn = ds / params.spatial_norm;
    return std::sqrt(dp * dp + dn * dn);
}

double max_depth(const ProjectedPoints& lidar) {
    double dmax = 0.0;
    for (const auto& e : lidar.entries) dmax = std::max(dmax, e.d);
    return dmax > 0.0 ? dmax : 1.0;
}

ClusterMap cluster_neighbors(const Event2DPoints& events, const ProjectedPoints& lidar, int width, int height,
                             int k_clusters, int iters, const DistanceParams& params, std::uint64_t /*seed*/) {
    params.validate();
    if (k_clusters < 1) throw InputError("cluster_neighbors: K must be >= 1");
    if (width <= 0 || height <= 0) throw InputError("cluster_neighbors: bad plane size");
    const std::vector<JointPoint> pts = joint_points(events, lidar);
    const int n = static_cast<int>(pts.size());
    if (n == 0) throw InputError("cluster_neighbors: no points to cluster");

    ClusterMap map;
    int k = k_clusters;
    if (k > n) {
        k = n;
        map.reduced = true;
    }
    map.cluster_count = k;

    // Grid seeding over the image plane.
    int cols = std::max(1, static_cast<int>(std::ceil(
                               std::sqrt(static_cast<double>(k) * width / std::max(1, height)))));
    cols = std::min(cols, k);
    const int rows = (k + cols - 1) / cols;
    const double cell_w = static_cast<double>(width) / cols;
    const double cell_h = static_cast<double>(height) / rows;
    const double pitch = std::max(cell_w, cell_h);
    map.window_pitch = pitch;

    std::vector<ClusterMap::Center> centers;
    centers.reserve(static_cast<std::size_t>(k));
    for (int c = 0; c < k; ++c) {
        const int gx = c % cols;
        const int gy = c / cols;
        ClusterMap::Center ctr;
        ctr.u = (gx + 0.5) * cell_w;
        ctr.v = (gy + 0.5) * cell_h;
        // Feature seeded from the spatially nearest point.
        double best = std::numeric_limits<double>::infinity();
        for (const JointPoint& p : pts) {
            const double d = (p.u - ctr.u) * (p.u - ctr.u) + (p.v - ctr.v) * (p.v - ctr.v);
            if (d < best) {
                best = d;
                ctr.feature = p.feature;
            }
        }
        centers.push_back(ctr);
    }

    const double inv_ns = 1.0 / params.spatial_norm;
    std::vector<int> assign(static_cast<std::size_t>(n), -1);

    auto assignment_pass = [&]() {
        for (int i = 0; i < n; ++i) {
            const JointPoint& p = pts[i];
            double best = std::numeric_limits<double>::infinity();
            int best_c = assign[static_cast<std::size_t>(i)];
            if (best_c >= 0) {
                const JointPoint c{centers[static_cast<std::size_t>(best_c)].u,
                                   centers[static_cast<std::size_t>(best_c)].v,
                                   centers[static_cast<std::size_t>(best_c)].feature};
                best = joint_distance_sq(p, c, inv_ns);
            }
            for (int ci = 0; ci < k; ++ci) {
                const auto& ctr = centers[static_cast<std::size_t>(ci)];
                if (std::abs(p.u - ctr.u) > pitch || std::abs(p.v - ctr.v) > pitch) continue;
                const double d = joint_distance_sq(p, {ctr.u, ctr.v, ctr.feature}, inv_ns);
                if (d < best) {
                    best = d;
                    best_c = ci;
                }
            }
            if (best_c < 0) {
                // Not covered by any window (possible only after centers
                // drift); fall back to a full scan.
                for (int ci = 0; ci < k; ++ci) {
                    const auto& ctr = centers[static_cast<std::size_t>(ci)];
                    const double d = joint_distance_sq(p, {ctr.u, ctr.v, ctr.feature}, inv_ns);
                    if (d < best) {
                        best = d;
                        best_c = ci;
                    }
                }
            }
            assign[static_cast<std::size_t>(i)] = best_c;
        }
    };

    auto update_pass = [&]() {
        std::vector<double> su(static_cast<std::size_t>(k), 0.0), sv(static_cast<std::size_t>(k), 0.0),
            sf(static_cast<std::size_t>(k), 0.0);
        std::vector<int> cnt(static_cast<std::size_t>(k), 0);
        for (int i = 0; i < n; ++i) {
            const int c = assign[static_cast<std::size_t>(i)];
            su[static_cast<std::size_t>(c)] += pts[static_cast<std::size_t>(i)].u;
            sv[static_cast<std::size_t>(c)] += pts[static_cast<std::size_t>(i)].v;
            sf[static_cast<std::size_t>(c)] += pts[static_cast<std::size_t>(i)].feature;
            ++cnt[static_cast<std::size_t>(c)];
        }
        for (int c = 0; c < k; ++c) {
            if (cnt[static_cast<std::size_t>(c)] == 0) continue;  // empty cluster keeps its center
            const double inv = 1.0 / cnt[static_cast<std::size_t>(c)];
            centers[static_cast<std::size_t>(c)].u = su[static_cast<std::size_t>(c)] * inv;
            centers[static_cast<std::size_t>(c)].v = sv[static_cast<std::size_t>(c)] * inv;
            centers[static_cast<std::size_t>(c)].feature = sf[static_cast<std::size_t>(c)] * inv;
        }
    };

    auto objective = [&]() {
        std::vector<double> terms(static_cast<std::size_t>(n));
        for (int i = 0; i < n; ++i) {
            const auto& ctr = centers[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])];
            terms[static_cast<std::size_t>(i)] =
                joint_distance_sq(pts[static_cast<std::size_t>(i)], {ctr.u, ctr.v, ctr.feature}, inv_ns);
        }
        return pairwise_sum(terms);
    };

    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < std::max(1, iters); ++it) {
        assignment_pass();
        update_pass();
        const double obj = objective();
        map.objective_history.push_back(obj);
        if (std::isfinite(prev) && prev - obj < 1e-9) break;
        prev = obj;
    }
    // Trailing assignment pass so the returned assignment is optimal for the
    // returned centers (a fixed point of re-assignment). It can only lower
    // the objective.
    assignment_pass();
    map.objective_history.push_back(objective());
    map.objective = map.objective_history.back();

    map.event_assignment.assign(assign.begin(), assign.begin() + static_cast<std::ptrdiff_t>(events.size()));
    map.lidar_assignment.assign(assign.begin() + static_cast<std::ptrdiff_t>(events.size()), assign.end());
    map.centers = std::move(centers);
    return map;
}

ProjectedPoints fill_boundary(const ProjectedPoints& lidar, const Event2DPoints& events, const ClusterMap& clusters,
                              int k, const DistanceParams& params) {
    params.validate();
    if (k < 1) throw InputError("fill_boundary: k must be >= 1");
    if (clusters.lidar_assignment.size() != lidar.entries.size() ||
        clusters.event_assignment.size() != events.size())
        throw InputError("fill_boundary: cluster map does not match the point sets");

    std::vector<std::vector<int>> events_by_cluster(static_cast<std::size_t>(clusters.cluster_count));
    for (std::size_t i = 0; i < events.size(); ++i)
        events_by_cluster[static_cast<std::size_t>(clusters.event_assignment[i])].push_back(static_cast<int>(i));

    const double dmax = max_depth(lidar);
    ProjectedPoints out = lidar;
    std::vector<Candidate> cands;
    for (std::size_t li = 0; li < lidar.entries.size(); ++li) {
        const auto& l = lidar.entries[li];
        const auto& members = events_by_cluster[static_cast<std::size_t>(clusters.lidar_assignment[li])];
        if (members.empty()) continue;
        cands.clear();
        for (int ei : members) {
            const auto& e = events.entries[static_cast<std::size_t>(ei)];
            const double d =
                joint_distance(l.u, l.v, l.d / dmax, e.u, e.v, static_cast<double>(e.p), params);
            cands.push_back({d, ei});
        }
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end());
        for (std::size_t j = 0; j < take; ++j) {
            const auto& e = events.entries[static_cast<std::size_t>(cands[j].index)];
            out.entries.push_back({e.u, e.v, l.d, -1});
        }
    }
    return out;
}

Image fuse_depth(const ProjectedPoints& lidar, const Event2DPoints& events, const ClusterMap& clusters, int k,
                 const CameraIntrinsics& K, const DistanceParams& params) {
    params.validate();
    K.validate();
    if (k < 1) throw InputError("fuse_depth: k must be >= 1");
    if (clusters.lidar_assignment.size() != lidar.entries.size() ||
        clusters.event_assignment.size() != events.size())
        throw InputError("fuse_depth: cluster map does not match the point sets");

    std::vector<std::vector<int>> lidar_by_cluster(static_cast<std::size_t>(clusters.cluster_count));
    for (std::size_t i = 0; i < lidar.entries.size(); ++i)
        lidar_by_cluster[static_cast<std::size_t>(clusters.lidar_assignment[i])].push_back(static_cast<int>(i));

    Image depth = Image::make(K.width, K.height, 1, Semantics::Depth);
    auto splat = [&](double u, double v, double d) {
        const int x = splat_x(u, K.width);
        const int y = splat_y(v, K.height);
        double& cell = depth.at(x, y);
        if (cell == 0.0 || d < cell) cell = d;
    };

    for (const auto& l : lidar.entries) splat(l.u, l.v, l.d);

    const double dmax = max_depth(lidar);
    std::vector<Candidate> cands;
    for (std::size_t ei = 0; ei < events.size(); ++ei) {
        const auto& e = events.entries[ei];
        const auto& members = lidar_by_cluster[static_cast<std::size_t>(clusters.event_assignment[ei])];
        if (members.empty()) continue;
        cands.clear();
        for (int li : members) {
            const auto& l = lidar.entries[static_cast<std::size_t>(li)];
            const double d =
                joint_distance(e.u, e.v, static_cast<double>(e.p), l.u, l.v, l.d / dmax, params);
            cands.push_back({d, li});
        }
        const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
        std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(take), cands.end());
        double wsum = 0.0, dsum = 0.0;
        for (std::size_t j = 0; j < take; ++j) {
            const double w = 1.0 / (cands[j].dist + 1e-6);
            wsum += w;
            dsum += w * lidar.entries[static_cast<std::size_t>(cands[j].index)].d;
        }
        splat(e.u, e.v, dsum / wsum);
    }
    return depth;
}

PseudoLabelLoss pseudo_label_loss(const Image& pred_t, const Image& pse_t, const Image& pred_t2,
                                  const Image& pse_t2) {
    if (!pred_t.same_shape(pse_t) || !pred_t2.same_shape(pse_t2))
        throw InputError("pseudo_label_loss: prediction and label shapes differ");

    auto frame_term = [](const Image& pred, const Image& pse, std::vector<double>& grad) {
        grad.assign(pred.data.size(), 0.0);
        std::vector<double> terms;
        std::size_t count = 0;
        for (std::size_t i = 0; i < pred.data.size(); ++i)
            if (pse.data[i] > 0.0) ++count;
        if (count == 0) throw InputError("pseudo_label_loss: frame has no valid pseudo labels");
        terms.reserve(count);
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            if (!(pse.data[i] > 0.0)) continue;
            const double r = pred.data[i] - pse.data[i];
            terms.push_back(std::abs(r));
            grad[i] = (r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0)) / static_cast<double>(count);
        }
        return pairwise_sum(terms) / static_cast<double>(count);
    };

    PseudoLabelLoss out;
    out.value = frame_term(pred_t, pse_t, out.grad_pred_t) + frame_term(pred_t2, pse_t2, out.grad_pred_t2);
    return out;
}

void save_cluster_label_image(const ClusterMap& clusters, const Event2DPoints& events, const ProjectedPoints& lidar,
                              int width, int height, const std::string& path) {
    Image labels = Image::make(width, height, 1, Semantics::Luma);
    auto mark = [&](double u, double v, int id) {
        labels.at(splat_x(u, width), splat_y(v, height)) = static_cast<double>(id + 1) / 65535.0;
    };
    for (std::size_t i = 0; i < events.size(); ++i)
        mark(events.entries[i].u, events.entries[i].v, clusters.event_assignment[i]);
    for (std::size_t i = 0; i < lidar.entries.size(); ++i)
        mark(lidar.entries[i].u, lidar.entries[i].v, clusters.lidar_assignment[i]);
    save_image(labels, path, 16);
}

void save_densified(const ProjectedPoints& densified, const std::string& path) {
    PointCloud rows;
    rows.points.reserve(densified.entries.size());
    for (const auto& e : densified.entries) rows.points.push_back({e.u, e.v, e.d});
    save_point_cloud(rows, path, "densified");
}

}  // namespace vmf
