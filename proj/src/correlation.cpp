#include "vmf/correlation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "vmf/geometry.hpp"

namespace vmf {

namespace {

constexpr double kCharbEps = 1e-3;
constexpr double kCharbP = 0.4;

// Uniform spatial hash over 3D points; cell size equals the query radius so
// a radius query only touches the 3x3x3 neighborhood.
class PointGrid {
public:
    PointGrid(const std::vector<Vec3>& pts, double cell) : pts_(pts), cell_(cell > 0.0 ? cell : 1.0) {
        cells_.reserve(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) cells_[key(pts[i])].push_back(static_cast<int>(i));
    }

    int count_within(const Vec3& q, double radius) const {
        int count = 0;
        visit_box(q, 1, [&](int idx) {
            if ((pts_[static_cast<std::size_t>(idx)] - q).norm() <= radius) ++count;
        });
        return count;
    }

    /// Nearest point within max_dist, or -1. Ties resolve to the first point
    /// in deterministic cell-scan order.
    int nearest_within(const Vec3& q, double max_dist) const {
        const int reach = static_cast<int>(std::ceil(max_dist / cell_)) + 1;
        int best = -1;
        double best_d = max_dist;
        visit_box(q, reach, [&](int idx) {
            const double d = (pts_[static_cast<std::size_t>(idx)] - q).norm();
            if (d < best_d || (best < 0 && d <= best_d)) {
                best_d = d;
                best = idx;
            }
        });
        return best;
    }

    /// Unbounded nearest neighbor; expands the search box until no closer
    /// point can hide outside it. Requires a non-empty point set.
    int nearest(const Vec3& q) const {
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int reach = 1; reach <= 4096; ++reach) {
            visit_box(q, reach, [&](int idx) {
                const double d = (pts_[static_cast<std::size_t>(idx)] - q).norm();
                if (d < best_d) {
                    best_d = d;
                    best = idx;
                }
            });
            // Any point outside the scanned box is farther than cell*(reach-1).
            if (best >= 0 && best_d <= cell_ * (reach - 1)) break;
        }
        return best;
    }

private:
    std::int64_t key(const Vec3& p) const {
        const auto qx = static_cast<std::int64_t>(std::floor(p.x / cell_));
        const auto qy = static_cast<std::int64_t>(std::floor(p.y / cell_));
        const auto qz = static_cast<std::int64_t>(std::floor(p.z / cell_));
        return ((qx & 0x1fffff) << 42) | ((qy & 0x1fffff) << 21) | (qz & 0x1fffff);
    }

    template <typename Fn>
    void visit_box(const Vec3& q, int reach, Fn&& fn) const {
        const auto bx = static_cast<std::int64_t>(std::floor(q.x / cell_));
        const auto by = static_cast<std::int64_t>(std::floor(q.y / cell_));
        const auto bz = static_cast<std::int64_t>(std::floor(q.z / cell_));
        for (std::int64_t ix = bx - reach; ix <= bx + reach; ++ix)
            for (std::int64_t iy = by - reach; iy <= by + reach; ++iy)
                for (std::int64_t iz = bz - reach; iz <= bz + reach; ++iz) {
                    const std::int64_t k = ((ix & 0x1fffff) << 42) | ((iy & 0x1fffff) << 21) | (iz & 0x1fffff);
                    const auto it = cells_.find(k);
                    if (it == cells_.end()) continue;
                    for (int idx : it->second) fn(idx);
                }
    }

    const std::vector<Vec3>& pts_;
    double cell_;
    std::unordered_map<std::int64_t, std::vector<int>> cells_;
};

void standardize_channels(std::vector<double>& data, std::size_t count, int channels) {
    for (int c = 0; c < channels; ++c) {
        double mean = 0.0;
        for (std::size_t i = 0; i < count; ++i) mean += data[i * channels + c];
        mean /= static_cast<double>(count);
        double var = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const double d = data[i * channels + c] - mean;
            var += d * d;
        }
        const double sigma = std::max(std::sqrt(var / static_cast<double>(count)), 1e-6);
        for (std::size_t i = 0; i < count; ++i) data[i * channels + c] = (data[i * channels + c] - mean) / sigma;
    }
}

double feature_dot(const FeatureMap& f, std::size_t row_a, const FeatureMap& g, std::size_t row_b) {
    double s = 0.0;
    for (int c = 0; c < f.channels; ++c)
        s += f.data[row_a * static_cast<std::size_t>(f.channels) + static_cast<std::size_t>(c)] *
             g.data[row_b * static_cast<std::size_t>(g.channels) + static_cast<std::size_t>(c)];
    return s;
}

// Bilinear lookup over all channels of a feature map; false when out of frame.
bool sample_features(const FeatureMap& f, double px, double py, std::vector<double>& out) {
    if (!(px >= 0.0 && px <= static_cast<double>(f.width - 1) && py >= 0.0 &&
          py <= static_cast<double>(f.height - 1)))
        return false;
    const int x0 = std::min(f.width - 1, std::max(0, static_cast<int>(std::floor(px))));
    const int y0 = std::min(f.height - 1, std::max(0, static_cast<int>(std::floor(py))));
    const int x1 = std::min(x0 + 1, f.width - 1);
    const int y1 = std::min(y0 + 1, f.height - 1);
    const double fx = px - x0, fy = py - y0;
    out.resize(static_cast<std::size_t>(f.channels));
    for (int c = 0; c < f.channels; ++c) {
        out[static_cast<std::size_t>(c)] = (1.0 - fx) * (1.0 - fy) * f.at(x0, y0, c) +
                                           fx * (1.0 - fy) * f.at(x1, y0, c) +
                                           (1.0 - fx) * fy * f.at(x0, y1, c) + fx * fy * f.at(x1, y1, c);
    }
    return true;
}

void check_pair(const CorrelationVolume& a, const CorrelationVolume& b, const char* op) {
    if (a.radius != b.radius || a.sample_count != b.sample_count)
        throw InputError(std::string(op) + ": correlation volume shapes differ");
}

}  // namespace

FeatureMap encode_features(const Image& img) {
    if (img.width <= 0 || img.height <= 0) throw InputError("encode_features: empty image");
    FeatureMap f;
    f.width = img.width;
    f.height = img.height;
    f.channels = 4 * img.channels;  // the channel quadruple applies per plane
    f.modality = img.semantics == Semantics::Intensity ? Modality::Event : Modality::Rgb;
    f.data.assign(img.pixel_count() * static_cast<std::size_t>(f.channels), 0.0);
    for (int plane = 0; plane < img.channels; ++plane) {
        for (int y = 0; y < img.height; ++y) {
            for (int x = 0; x < img.width; ++x) {
                const int xm = std::max(0, x - 1), xp = std::min(img.width - 1, x + 1);
                const int ym = std::max(0, y - 1), yp = std::min(img.height - 1, y + 1);
                double mean = 0.0;
                for (int dy = -1; dy <= 1; ++dy)
                    for (int dx = -1; dx <= 1; ++dx)
                        mean += img.at(std::clamp(x + dx, 0, img.width - 1), std::clamp(y + dy, 0, img.height - 1),
                                       plane);
                const std::size_t row = f.index(x, y, plane * 4);
                f.data[row + 0] = img.at(x, y, plane);
                f.data[row + 1] = std::abs(0.5 * (img.at(xp, y, plane) - img.at(xm, y, plane)));
                f.data[row + 2] = std::abs(0.5 * (img.at(x, yp, plane) - img.at(x, ym, plane)));
                f.data[row + 3] = mean / 9.0;
            }
        }
    }
    standardize_channels(f.data, img.pixel_count(), f.channels);
    return f;
}

FeatureMap encode_features(const PointCloud& pc, const FeatureSpec& spec) {
    if (pc.points.empty()) throw InputError("encode_features: empty point cloud");
    if (!(spec.density_radius > 0.0)) throw InputError("encode_features: density radius must be > 0");
    FeatureMap f;
    f.width = static_cast<int>(pc.points.size());
    f.height = 1;
    f.channels = 4;
    f.modality = Modality::Lidar;
    f.positions = pc.points;
    f.data.assign(pc.points.size() * 4, 0.0);
    const PointGrid grid(pc.points, spec.density_radius);
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        f.data[i * 4 + 0] = pc.points[i].x;
        f.data[i * 4 + 1] = pc.points[i].y;
        f.data[i * 4 + 2] = pc.points[i].z;
        f.data[i * 4 + 3] = static_cast<double>(grid.count_within(pc.points[i], spec.density_radius));
    }
    standardize_channels(f.data, pc.points.size(), 4);
    return f;
}

SampleSet sample_points(const PointCloud& pc, int n, const CameraIntrinsics& K, std::uint64_t seed) {
    K.validate();
    if (n < 1) throw InputError("sample_points: n must be >= 1");
    std::vector<int> candidates;
    std::vector<double> us, vs;
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        const Vec3& p = pc.points[i];
        if (!(p.z > 0.0)) continue;
        const double u = K.f * p.x / p.z + K.cx;
        const double v = K.f * p.y / p.z + K.cy;
        if (!(u > 0.0 && u < K.width && v > 0.0 && v < K.height)) continue;
        candidates.push_back(static_cast<int>(i));
        us.push_back(u);
        vs.push_back(v);
    }
    if (candidates.empty()) throw InputError("sample_points: no points project inside the frame");

    Rng rng(seed);
    std::vector<int> pick = sample_without_replacement(static_cast<int>(candidates.size()), n, rng);
    std::sort(pick.begin(), pick.end());

    SampleSet out;
    out.indices.reserve(pick.size());
    for (int ci : pick) {
        out.indices.push_back(candidates[static_cast<std::size_t>(ci)]);
        out.u.push_back(us[static_cast<std::size_t>(ci)]);
        out.v.push_back(vs[static_cast<std::size_t>(ci)]);
    }
    return out;
}

Correlation2D build_correlation_2d(const FeatureMap& f1, const FeatureMap& f2, const SampleSet& samples,
                                   const FlowField2D& init_flow, int radius, int slice_index) {
    if (f1.width != f2.width || f1.height != f2.height || f1.channels != f2.channels)
        throw InputError("build_correlation_2d: feature map shapes differ");
    if (f1.width != init_flow.width || f1.height != init_flow.height)
        throw InputError("build_correlation_2d: init flow shape differs");
    if (radius < 1) throw InputError("build_correlation_2d: radius must be >= 1");

    // Warp f2 by the initial flow so profiles measure residual displacement.
    FeatureMap f2w = f2;
    std::vector<double> feat;
    for (int y = 0; y < f2.height; ++y) {
        for (int x = 0; x < f2.width; ++x) {
            const std::size_t i = init_flow.index(x, y);
            const bool ok = sample_features(f2, x + init_flow.du[i], y + init_flow.dv[i], feat);
            for (int c = 0; c < f2.channels; ++c)
                f2w.data[f2w.index(x, y, c)] = ok ? feat[static_cast<std::size_t>(c)] : 0.0;
        }
    }

    const Modality modality = f1.modality;
    Correlation2D out{CorrelationVolume::make(Axis::X, modality, radius, samples.size(), slice_index),
                      CorrelationVolume::make(Axis::Y, modality, radius, samples.size(), slice_index)};
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(f1.channels));
    std::vector<double> anchor;
    for (int s = 0; s < samples.size(); ++s) {
        const double su = samples.u[static_cast<std::size_t>(s)];
        const double sv = samples.v[static_cast<std::size_t>(s)];
        if (!sample_features(f1, su, sv, anchor)) {
            for (int b = 0; b < out.x.bins(); ++b) out.x.at(s, b) = out.y.at(s, b) = kSentinel;
            continue;
        }
        for (int d = -radius; d <= radius; ++d) {
            double score_x = kSentinel, score_y = kSentinel;
            if (sample_features(f2w, su + d, sv, feat)) {
                double dot = 0.0;
                for (int c = 0; c < f1.channels; ++c)
                    dot += anchor[static_cast<std::size_t>(c)] * feat[static_cast<std::size_t>(c)];
                score_x = dot * inv_sqrt_c;
            }
            if (sample_features(f2w, su, sv + d, feat)) {
                double dot = 0.0;
                for (int c = 0; c < f1.channels; ++c)
                    dot += anchor[static_cast<std::size_t>(c)] * feat[static_cast<std::size_t>(c)];
                score_y = dot * inv_sqrt_c;
            }
            out.x.at(s, d + radius) = score_x;
            out.y.at(s, d + radius) = score_y;
        }
    }
    return out;
}

AxisOffsets matched_axis_offsets(int radius, double focal, double median_depth, int base_dx, int base_dy) {
    if (radius < 1) throw InputError("matched_axis_offsets: radius must be >= 1");
    if (!(focal > 0.0) || !(median_depth > 0.0))
        throw InputError("matched_axis_offsets: focal and depth must be > 0");
    const double step = median_depth / focal;
    AxisOffsets off;
    for (int i = -radius; i <= radius; ++i) {
        off.x.push_back((base_dx + i) * step);
        off.y.push_back((base_dy + i) * step);
        off.z.push_back(i * step);
    }
    return off;
}

std::pair<int, int> estimate_global_shift(const FeatureMap& f1, const FeatureMap& f2, int radius) {
    if (f1.width != f2.width || f1.height != f2.height || f1.channels != f2.channels)
        throw InputError("estimate_global_shift: feature map shapes differ");
    if (radius < 1) throw InputError("estimate_global_shift: radius must be >= 1");
    int best_dx = 0, best_dy = 0;
    double best = -std::numeric_limits<double>::infinity();
    for (int dy = -radius; dy <= radius; ++dy) {
        for (int dx = -radius; dx <= radius; ++dx) {
            double sum = 0.0;
            std::size_t count = 0;
            for (int y = std::max(0, -dy); y < f1.height - std::max(0, dy); ++y) {
                for (int x = std::max(0, -dx); x < f1.width - std::max(0, dx); ++x) {
                    for (int c = 0; c < f1.channels; ++c) sum += f1.at(x, y, c) * f2.at(x + dx, y + dy, c);
                    ++count;
                }
            }
            if (count == 0) continue;
            const double mean = sum / static_cast<double>(count);
            if (mean > best) {
                best = mean;
                best_dx = dx;
                best_dy = dy;
            }
        }
    }
    return {best_dx, best_dy};
}

Correlation3D build_correlation_3d(const FeatureMap& f1, const FeatureMap& f2, const SampleSet& samples,
                                   const AxisOffsets& offsets, double nn_max_dist) {
    if (f1.modality != Modality::Lidar || f2.modality != Modality::Lidar)
        throw InputError("build_correlation_3d: expected LiDAR feature maps");
    if (f1.channels != f2.channels) throw InputError("build_correlation_3d: channel counts differ");
    if (f2.positions.empty()) throw InputError("build_correlation_3d: second cloud is empty");
    const auto check_axis = [](const std::vector<double>& o) {
        if (o.size() < 3 || o.size() % 2 == 0)
            throw InputError("build_correlation_3d: offsets must have odd length >= 3");
    };
    check_axis(offsets.x);
    check_axis(offsets.y);
    check_axis(offsets.z);
    if (offsets.x.size() != offsets.y.size() || offsets.x.size() != offsets.z.size())
        throw InputError("build_correlation_3d: per-axis offset counts differ");
    if (!(nn_max_dist > 0.0)) throw InputError("build_correlation_3d: nn_max_dist must be > 0");

    const int radius = static_cast<int>(offsets.x.size() / 2);
    Correlation3D out{CorrelationVolume::make(Axis::X, Modality::Lidar, radius, samples.size()),
                      CorrelationVolume::make(Axis::Y, Modality::Lidar, radius, samples.size()),
                      CorrelationVolume::make(Axis::Z, Modality::Lidar, radius, samples.size())};

    const PointGrid grid(f2.positions, nn_max_dist);
    const double inv_sqrt_c = 1.0 / std::sqrt(static_cast<double>(f1.channels));
    for (int s = 0; s < samples.size(); ++s) {
        const int pi = samples.indices[static_cast<std::size_t>(s)];
        if (pi < 0 || pi >= f1.width) throw InputError("build_correlation_3d: sample index out of range");
        const Vec3 p = f1.positions[static_cast<std::size_t>(pi)];
        for (int axis = 0; axis < 3; ++axis) {
            const std::vector<double>& off = axis == 0 ? offsets.x : (axis == 1 ? offsets.y : offsets.z);
            CorrelationVolume& cv = axis == 0 ? out.x : (axis == 1 ? out.y : out.z);
            for (std::size_t b = 0; b < off.size(); ++b) {
                Vec3 q = p;
                if (axis == 0) q.x += off[b];
                else if (axis == 1) q.y += off[b];
                else q.z += off[b];
                const int nn = grid.nearest_within(q, nn_max_dist);
                cv.at(s, static_cast<int>(b)) =
                    nn < 0 ? kSentinel
                           : feature_dot(f1, static_cast<std::size_t>(pi), f2, static_cast<std::size_t>(nn)) *
                                 inv_sqrt_c;
            }
        }
    }
    return out;
}

std::vector<double> softmax_profile(const double* scores, int bins, double temperature) {
    if (!(temperature > 0.0)) throw InputError("softmax_profile: temperature must be > 0");
    std::vector<double> p(static_cast<std::size_t>(bins), 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (int b = 0; b < bins; ++b)
        if (!is_sentinel(scores[b])) mx = std::max(mx, scores[b] / temperature);
    if (!std::isfinite(mx)) return p;  // all-sentinel profile
    double z = 0.0;
    for (int b = 0; b < bins; ++b) {
        if (is_sentinel(scores[b])) continue;
        p[static_cast<std::size_t>(b)] = std::exp(scores[b] / temperature - mx);
        z += p[static_cast<std::size_t>(b)];
    }
    for (double& v : p) v /= z;
    return p;
}

namespace {

// One KL(P||Q) term over the common finite support of two raw profiles.
// Returns false when the supports do not intersect. grad_p/grad_q receive
// the weighted gradient contribution w.r.t. the raw scores.
bool kl_term(const double* p_scores, const double* q_scores, int bins, double weight, double& value,
             double* grad_p, double* grad_q) {
    std::vector<int> support;
    support.reserve(static_cast<std::size_t>(bins));
    for (int b = 0; b < bins; ++b)
        if (!is_sentinel(p_scores[b]) && !is_sentinel(q_scores[b])) support.push_back(b);
    if (support.empty()) return false;

    auto log_probs = [&](const double* s) {
        double mx = -std::numeric_limits<double>::infinity();
        for (int b : support) mx = std::max(mx, s[b]);
        double z = 0.0;
        for (int b : support) z += std::exp(s[b] - mx);
        const double log_z = std::log(z) + mx;
        std::vector<double> lp(support.size());
        for (std::size_t i = 0; i < support.size(); ++i) lp[i] = s[support[i]] - log_z;
        return lp;
    };

    const std::vector<double> lp = log_probs(p_scores);
    const std::vector<double> lq = log_probs(q_scores);
    double kl = 0.0;
    for (std::size_t i = 0; i < support.size(); ++i) kl += std::exp(lp[i]) * (lp[i] - lq[i]);
    value += weight * kl;
    for (std::size_t i = 0; i < support.size(); ++i) {
        const double pi = std::exp(lp[i]);
        const double qi = std::exp(lq[i]);
        grad_p[support[i]] += weight * pi * (lp[i] - lq[i] - kl);
        grad_q[support[i]] += weight * (qi - pi);
    }
    return true;
}

}  // namespace

KlAlignmentLoss kl_alignment_loss(const Correlation3D& lidar, const Correlation2D& rgb,
                                  const std::vector<Correlation2D>& event_slices) {
    check_pair(lidar.x, rgb.x, "kl_alignment_loss");
    check_pair(lidar.y, rgb.y, "kl_alignment_loss");
    if (event_slices.empty()) throw InputError("kl_alignment_loss: need at least one event slice");
    for (const auto& ev : event_slices) {
        check_pair(lidar.x, ev.x, "kl_alignment_loss");
        check_pair(lidar.y, ev.y, "kl_alignment_loss");
    }

    const int n = lidar.x.sample_count;
    const int bins = lidar.x.bins();
    const double t = static_cast<double>(event_slices.size());

    KlAlignmentLoss out;
    out.grad_lidar_x.assign(lidar.x.scores.size(), 0.0);
    out.grad_lidar_y.assign(lidar.y.scores.size(), 0.0);
    out.grad_rgb_x.assign(rgb.x.scores.size(), 0.0);
    out.grad_rgb_y.assign(rgb.y.scores.size(), 0.0);
    out.grad_event_x.assign(event_slices.size(), std::vector<double>(rgb.x.scores.size(), 0.0));
    out.grad_event_y.assign(event_slices.size(), std::vector<double>(rgb.y.scores.size(), 0.0));
    if (n == 0) return out;

    const double inv_n = 1.0 / static_cast<double>(n);
    for (int s = 0; s < n; ++s) {
        const std::size_t row = static_cast<std::size_t>(s) * static_cast<std::size_t>(bins);
        struct AxisRefs {
            const double* lid;
            const double* r;
            double* g_lid;
            double* g_r;
            const CorrelationVolume Correlation2D::*ev_member;
            std::vector<std::vector<double>>* g_ev;
        };
        const AxisRefs axes[2] = {
            {lidar.x.scores.data() + row, rgb.x.scores.data() + row, out.grad_lidar_x.data() + row,
             out.grad_rgb_x.data() + row, &Correlation2D::x, &out.grad_event_x},
            {lidar.y.scores.data() + row, rgb.y.scores.data() + row, out.grad_lidar_y.data() + row,
             out.grad_rgb_y.data() + row, &Correlation2D::y, &out.grad_event_y},
        };
        for (const AxisRefs& ax : axes) {
            if (!kl_term(ax.lid, ax.r, bins, inv_n, out.value, ax.g_lid, ax.g_r)) ++out.skipped_terms;
            for (std::size_t e = 0; e < event_slices.size(); ++e) {
                const CorrelationVolume& ev = event_slices[e].*ax.ev_member;
                if (!kl_term(ax.lid, ev.scores.data() + row, bins, inv_n / t, out.value, ax.g_lid,
                             (*ax.g_ev)[e].data() + row))
                    ++out.skipped_terms;
            }
        }
    }
    return out;
}

FusedCorrelation fuse_correlation(const Correlation2D& rgb, const std::vector<Correlation2D>& event_slices,
                                  const Correlation3D& lidar) {
    if (event_slices.empty()) throw InputError("fuse_correlation: need at least one event slice");
    check_pair(rgb.x, lidar.x, "fuse_correlation");
    check_pair(rgb.y, lidar.y, "fuse_correlation");
    for (const auto& ev : event_slices) {
        check_pair(rgb.x, ev.x, "fuse_correlation");
        check_pair(rgb.y, ev.y, "fuse_correlation");
    }

    const double t = static_cast<double>(event_slices.size());
    FusedCorrelation out{rgb.x, rgb.y, lidar.z};
    out.x.modality = out.y.modality = out.z.modality = Modality::Lidar;  // fused; tag by the 3D carrier
    out.x.slice_index = out.y.slice_index = -1;

    auto fuse_axis = [&](CorrelationVolume& dst, const CorrelationVolume& r, const CorrelationVolume& l,
                         const CorrelationVolume Correlation2D::*member) {
        std::vector<double> terms(event_slices.size());
        for (std::size_t i = 0; i < dst.scores.size(); ++i) {
            if (is_sentinel(r.scores[i]) || is_sentinel(l.scores[i])) {
                dst.scores[i] = kSentinel;
                continue;
            }
            bool hit_sentinel = false;
            for (std::size_t e = 0; e < event_slices.size(); ++e) {
                const double ev = (event_slices[e].*member).scores[i];
                if (is_sentinel(ev)) {
                    hit_sentinel = true;
                    break;
                }
                terms[e] = (r.scores[i] + ev + l.scores[i]) / 3.0;
            }
            dst.scores[i] = hit_sentinel ? kSentinel : pairwise_sum(terms) / t;
        }
    };
    fuse_axis(out.x, rgb.x, lidar.x, &Correlation2D::x);
    fuse_axis(out.y, rgb.y, lidar.y, &Correlation2D::y);
    return out;
}

namespace {

// Expectation readout of one axis; returns false for all-sentinel profiles.
bool soft_argmax_axis(const CorrelationVolume& cv, int sample, const std::vector<double>& offsets, double tau,
                      double& value) {
    const std::vector<double> p =
        softmax_profile(cv.scores.data() + static_cast<std::size_t>(sample) * static_cast<std::size_t>(cv.bins()),
                        cv.bins(), tau);
    double z = 0.0, v = 0.0;
    for (int b = 0; b < cv.bins(); ++b) {
        z += p[static_cast<std::size_t>(b)];
        v += p[static_cast<std::size_t>(b)] * offsets[static_cast<std::size_t>(b)];
    }
    if (z == 0.0) return false;
    value = v;
    return true;
}

}  // namespace

FlowField3D soft_argmax_flow(const FusedCorrelation& corr, const AxisOffsets& offsets, double tau) {
    if (!(tau > 0.0)) throw InputError("soft_argmax_flow: temperature must be > 0");
    if (offsets.x.size() != static_cast<std::size_t>(corr.x.bins()) ||
        offsets.y.size() != static_cast<std::size_t>(corr.y.bins()) ||
        offsets.z.size() != static_cast<std::size_t>(corr.z.bins()))
        throw InputError("soft_argmax_flow: offset counts do not match profiles");

    FlowField3D out;
    out.flow.assign(static_cast<std::size_t>(corr.x.sample_count), Vec3{});
    out.valid.assign(static_cast<std::size_t>(corr.x.sample_count), 0);
    for (int s = 0; s < corr.x.sample_count; ++s) {
        Vec3 f;
        const bool okx = soft_argmax_axis(corr.x, s, offsets.x, tau, f.x);
        const bool oky = soft_argmax_axis(corr.y, s, offsets.y, tau, f.y);
        const bool okz = soft_argmax_axis(corr.z, s, offsets.z, tau, f.z);
        if (okx && oky) {
            if (!okz) f.z = 0.0;  // z profile may be fully sparse; x/y still usable
            out.flow[static_cast<std::size_t>(s)] = f;
            out.valid[static_cast<std::size_t>(s)] = 1;
        }
    }
    return out;
}

SampleFlow2D soft_argmax_flow_2d(const Correlation2D& corr, double tau, int base_dx, int base_dy) {
    if (!(tau > 0.0)) throw InputError("soft_argmax_flow_2d: temperature must be > 0");
    std::vector<double> offsets_x, offsets_y;
    for (int d = -corr.x.radius; d <= corr.x.radius; ++d) {
        offsets_x.push_back(static_cast<double>(base_dx + d));
        offsets_y.push_back(static_cast<double>(base_dy + d));
    }

    SampleFlow2D out;
    out.du.assign(static_cast<std::size_t>(corr.x.sample_count), 0.0);
    out.dv.assign(static_cast<std::size_t>(corr.x.sample_count), 0.0);
    out.valid.assign(static_cast<std::size_t>(corr.x.sample_count), 0);
    for (int s = 0; s < corr.x.sample_count; ++s) {
        double du = 0.0, dv = 0.0;
        if (soft_argmax_axis(corr.x, s, offsets_x, tau, du) &&
            soft_argmax_axis(corr.y, s, offsets_y, tau, dv)) {
            out.du[static_cast<std::size_t>(s)] = du;
            out.dv[static_cast<std::size_t>(s)] = dv;
            out.valid[static_cast<std::size_t>(s)] = 1;
        }
    }
    return out;
}

WarpedImage warp_image(const Image& img, const FlowField2D& flow) {
    if (img.width != flow.width || img.height != flow.height) throw InputError("warp_image: shapes differ");
    WarpedImage out;
    out.image = Image::make(img.width, img.height, img.channels, img.semantics);
    out.valid.assign(img.pixel_count(), 0);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const std::size_t i = flow.index(x, y);
            const double px = x + flow.du[i], py = y + flow.dv[i];
            if (!sample_in_bounds(img, px, py)) continue;
            out.valid[i] = 1;
            for (int c = 0; c < img.channels; ++c)
                out.image.at(x, y, c) = bilinear_sample(img, px, py, c).value;
        }
    }
    return out;
}

std::vector<Vec3> warp_points(const std::vector<Vec3>& positions, const FlowField3D& flow) {
    if (positions.size() != flow.size()) throw InputError("warp_points: sizes differ");
    std::vector<Vec3> out(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
        out[i] = flow.valid[i] ? positions[i] + flow.flow[i] : positions[i];
    return out;
}

namespace {

double consistency_threshold(double tau_occ, double fwd_sq, double bwd_sq) {
    return tau_occ > 0.0 ? tau_occ : 0.01 + 0.05 * (fwd_sq + bwd_sq);
}

}  // namespace

Image occlusion_mask_2d(const FlowField2D& fwd, const FlowField2D& bwd, double tau_occ) {
    if (fwd.width != bwd.width || fwd.height != bwd.height) throw InputError("occlusion_mask_2d: shapes differ");
    Image mask = Image::make(fwd.width, fwd.height, 1, Semantics::Luma);
    for (int y = 0; y < fwd.height; ++y) {
        for (int x = 0; x < fwd.width; ++x) {
            const std::size_t i = fwd.index(x, y);
            if (!fwd.valid[i]) continue;
            const double px = x + fwd.du[i], py = y + fwd.dv[i];
            if (!(px >= 0.0 && px <= fwd.width - 1 && py >= 0.0 && py <= fwd.height - 1)) continue;
            // Require all four interpolation corners of the backward field.
            const int x0 = std::min(fwd.width - 1, static_cast<int>(std::floor(px)));
            const int y0 = std::min(fwd.height - 1, static_cast<int>(std::floor(py)));
            const int x1 = std::min(x0 + 1, fwd.width - 1);
            const int y1 = std::min(y0 + 1, fwd.height - 1);
            if (!bwd.valid[bwd.index(x0, y0)] || !bwd.valid[bwd.index(x1, y0)] ||
                !bwd.valid[bwd.index(x0, y1)] || !bwd.valid[bwd.index(x1, y1)])
                continue;
            const double fx = px - x0, fy = py - y0;
            auto lerp2 = [&](const std::vector<double>& ch) {
                return (1.0 - fx) * (1.0 - fy) * ch[bwd.index(x0, y0)] + fx * (1.0 - fy) * ch[bwd.index(x1, y0)] +
                       (1.0 - fx) * fy * ch[bwd.index(x0, y1)] + fx * fy * ch[bwd.index(x1, y1)];
            };
            const double bu = lerp2(bwd.du), bv = lerp2(bwd.dv);
            const double fwd_sq = fwd.du[i] * fwd.du[i] + fwd.dv[i] * fwd.dv[i];
            const double bwd_sq = bu * bu + bv * bv;
            const double err = std::hypot(fwd.du[i] + bu, fwd.dv[i] + bv);
            if (err <= consistency_threshold(tau_occ, fwd_sq, bwd_sq)) mask.at(x, y) = 1.0;
        }
    }
    return mask;
}

std::vector<std::uint8_t> occlusion_mask_3d(const std::vector<Vec3>& fwd_positions, const FlowField3D& fwd,
                                            const std::vector<Vec3>& bwd_positions, const FlowField3D& bwd,
                                            double tau_occ) {
    if (fwd_positions.size() != fwd.size() || bwd_positions.size() != bwd.size())
        throw InputError("occlusion_mask_3d: position/flow sizes differ");
    std::vector<std::uint8_t> mask(fwd_positions.size(), 0);
    if (bwd_positions.empty()) return mask;
    // Cell size from the data spread keeps ring expansion short.
    double span = 0.0;
    for (const Vec3& p : bwd_positions) span = std::max({span, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
    const PointGrid grid(bwd_positions, std::max(1e-3, span / 16.0));
    for (std::size_t i = 0; i < fwd_positions.size(); ++i) {
        if (!fwd.valid[i]) continue;
        const Vec3 target = fwd_positions[i] + fwd.flow[i];
        const int nn = grid.nearest(target);
        if (nn < 0 || !bwd.valid[static_cast<std::size_t>(nn)]) continue;
        const Vec3 back = bwd.flow[static_cast<std::size_t>(nn)];
        const Vec3 err = fwd.flow[i] + back;
        const double thresh =
            consistency_threshold(tau_occ, fwd.flow[i].dot(fwd.flow[i]), back.dot(back));
        if (err.norm() <= thresh) mask[i] = 1;
    }
    return mask;
}

double charbonnier(double x) {
    return std::pow(x * x + kCharbEps * kCharbEps, kCharbP / 2.0) - std::pow(kCharbEps, kCharbP);
}

double charbonnier_derivative(double x) {
    return kCharbP * x * std::pow(x * x + kCharbEps * kCharbEps, kCharbP / 2.0 - 1.0);
}

PhotometricLoss photometric_loss(const Image& frame_t, const Image& frame_t2, const FlowField2D& flow2d,
                                 const Image& mask2d, const std::vector<Vec3>& sample_positions_t,
                                 const PointCloud& cloud_t2, const FlowField3D& flow3d,
                                 const std::vector<std::uint8_t>& mask3d) {
    if (!frame_t.same_shape(frame_t2)) throw InputError("photometric_loss: frame shapes differ");
    if (frame_t.width != flow2d.width || frame_t.height != flow2d.height)
        throw InputError("photometric_loss: flow shape differs");
    if (mask2d.width != frame_t.width || mask2d.height != frame_t.height || mask2d.channels != 1)
        throw InputError("photometric_loss: mask shape differs");

    PhotometricLoss out;
    const std::size_t n = frame_t.pixel_count();
    out.grad_du.assign(n, 0.0);
    out.grad_dv.assign(n, 0.0);

    // 2D term. Pixels whose warp sample leaves the frame drop out of the mask.
    std::size_t count2d = 0;
    for (int y = 0; y < frame_t.height; ++y)
        for (int x = 0; x < frame_t.width; ++x) {
            const std::size_t i = flow2d.index(x, y);
            if (mask2d.at(x, y) == 0.0) continue;
            if (sample_in_bounds(frame_t2, x + flow2d.du[i], y + flow2d.dv[i])) ++count2d;
        }
    if (count2d == 0) throw InputError("photometric_loss: empty 2D mask");

    const double denom2d = static_cast<double>(count2d) * frame_t.channels;
    std::vector<double> terms;
    terms.reserve(count2d * static_cast<std::size_t>(frame_t.channels));
    for (int y = 0; y < frame_t.height; ++y) {
        for (int x = 0; x < frame_t.width; ++x) {
            const std::size_t i = flow2d.index(x, y);
            if (mask2d.at(x, y) == 0.0) continue;
            const double px = x + flow2d.du[i], py = y + flow2d.dv[i];
            if (!sample_in_bounds(frame_t2, px, py)) continue;
            for (int c = 0; c < frame_t.channels; ++c) {
                const BilinearSample w = bilinear_sample(frame_t2, px, py, c);
                const double r = frame_t.at(x, y, c) - w.value;
                terms.push_back(charbonnier(r));
                const double dpsi = charbonnier_derivative(r);
                out.grad_du[i] += dpsi * (-w.dx) / denom2d;
                out.grad_dv[i] += dpsi * (-w.dy) / denom2d;
            }
        }
    }
    out.value_2d = pairwise_sum(terms) / denom2d;

    // 3D term, present only when sampled positions are supplied.
    if (!sample_positions_t.empty()) {
        if (sample_positions_t.size() != flow3d.size() || mask3d.size() != flow3d.size())
            throw InputError("photometric_loss: 3D input sizes differ");
        if (cloud_t2.points.empty()) throw InputError("photometric_loss: empty t2 cloud");
        out.grad_flow3d.assign(flow3d.size(), Vec3{});

        std::size_t valid3d = 0;
        for (std::size_t i = 0; i < flow3d.size(); ++i)
            if (mask3d[i] && flow3d.valid[i]) ++valid3d;
        if (valid3d == 0) throw InputError("photometric_loss: empty 3D mask");

        double span = 0.0;
        for (const Vec3& p : cloud_t2.points)
            span = std::max({span, std::abs(p.x), std::abs(p.y), std::abs(p.z)});
        const PointGrid grid(cloud_t2.points, std::max(1e-3, span / 16.0));
        const double denom3d = static_cast<double>(valid3d) * 3.0;
        std::vector<double> terms3;
        terms3.reserve(valid3d * 3);
        for (std::size_t i = 0; i < flow3d.size(); ++i) {
            if (!mask3d[i] || !flow3d.valid[i]) continue;
            const Vec3 q = sample_positions_t[i] + flow3d.flow[i];
            const int nn = grid.nearest(q);
            const Vec3 r = q - cloud_t2.points[static_cast<std::size_t>(nn)];
            terms3.push_back(charbonnier(r.x));
            terms3.push_back(charbonnier(r.y));
            terms3.push_back(charbonnier(r.z));
            out.grad_flow3d[i] = {charbonnier_derivative(r.x) / denom3d, charbonnier_derivative(r.y) / denom3d,
                                  charbonnier_derivative(r.z) / denom3d};
        }
        out.value_3d = pairwise_sum(terms3) / denom3d;
    }

    out.value = out.value_2d + out.value_3d;
    return out;
}

}  // namespace vmf
