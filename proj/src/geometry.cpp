#include "vmf/geometry.hpp"

#include <cmath>
#include <unordered_map>

namespace vmf {

BilinearSample bilinear_sample(const Image& img, double px, double py, int channel) {
    BilinearSample s;
    if (!sample_in_bounds(img, px, py)) return s;
    const int x0 = std::min(img.width - 1, std::max(0, static_cast<int>(std::floor(px))));
    const int y0 = std::min(img.height - 1, std::max(0, static_cast<int>(std::floor(py))));
    const int x1 = std::min(x0 + 1, img.width - 1);
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fx = px - static_cast<double>(x0);
    const double fy = py - static_cast<double>(y0);
    const double v00 = img.at(x0, y0, channel);
    const double v10 = img.at(x1, y0, channel);
    const double v01 = img.at(x0, y1, channel);
    const double v11 = img.at(x1, y1, channel);
    s.value = (1.0 - fx) * (1.0 - fy) * v00 + fx * (1.0 - fy) * v10 + (1.0 - fx) * fy * v01 + fx * fy * v11;
    s.dx = (1.0 - fy) * (v10 - v00) + fy * (v11 - v01);
    s.dy = (1.0 - fx) * (v01 - v00) + fx * (v11 - v10);
    s.in_bounds = true;
    return s;
}

ProjectedPoints project_points(const PointCloud& pc, const CameraIntrinsics& K) {
    K.validate();
    ProjectedPoints out;
    // pixel key -> index into out.entries, for the z-buffer
    std::unordered_map<std::int64_t, std::size_t> occupied;
    occupied.reserve(pc.points.size());
    for (std::size_t i = 0; i < pc.points.size(); ++i) {
        const Vec3& p = pc.points[i];
        if (!(p.z > 0.0)) continue;
        const double u = K.f * p.x / p.z + K.cx;
        const double v = K.f * p.y / p.z + K.cy;
        if (!(u > 0.0 && u < static_cast<double>(K.width) && v > 0.0 && v < static_cast<double>(K.height)))
            continue;
        ProjectedPoints::Entry e;
        e.u = u;
        e.v = v;
        e.d = p.z;
        e.source = static_cast<int>(i);
        const std::int64_t key = static_cast<std::int64_t>(splat_y(v, K.height)) * K.width + splat_x(u, K.width);
        auto it = occupied.find(key);
        if (it == occupied.end()) {
            occupied.emplace(key, out.entries.size());
            out.entries.push_back(e);
        } else if (e.d < out.entries[it->second].d) {
            out.entries[it->second] = e;
        }
    }
    return out;
}

PointCloud backproject_depth(const Image& depth, const CameraIntrinsics& K) {
    K.validate();
    if (depth.semantics != Semantics::Depth || depth.channels != 1)
        throw InputError("backproject_depth: input must be a single-channel DEPTH image");
    PointCloud pc;
    for (int y = 0; y < depth.height; ++y) {
        for (int x = 0; x < depth.width; ++x) {
            const double d = depth.at(x, y);
            if (!(d > 0.0)) continue;
            Vec3 p;
            p.x = (static_cast<double>(x) - K.cx) * d / K.f;
            p.y = (static_cast<double>(y) - K.cy) * d / K.f;
            p.z = d;
            pc.points.push_back(p);
        }
    }
    return pc;
}

}  // namespace vmf
