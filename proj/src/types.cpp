#include "vmf/types.hpp"

#include <cmath>

namespace vmf {

void CameraIntrinsics::validate() const {
    if (!(f > 0.0)) throw InputError("intrinsics: focal length must be > 0");
    if (width <= 0 || height <= 0) throw InputError("intrinsics: sensor size must be positive");
    if (!(cx > 0.0 && cx < width)) throw InputError("intrinsics: cx out of (0, width)");
    if (!(cy > 0.0 && cy < height)) throw InputError("intrinsics: cy out of (0, height)");
}

const char* semantics_name(Semantics s) {
    switch (s) {
        case Semantics::Rgb: return "RGB";
        case Semantics::Yuv: return "YUV";
        case Semantics::Luma: return "LUMA";
        case Semantics::Intensity: return "INTENSITY";
        case Semantics::Depth: return "DEPTH";
    }
    return "?";
}

Image Image::make(int w, int h, int c, Semantics s, double fill) {
    if (w < 0 || h < 0 || (c != 1 && c != 3)) throw InputError("image: bad shape");
    Image img;
    img.width = w;
    img.height = h;
    img.channels = c;
    img.semantics = s;
    img.data.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * static_cast<std::size_t>(c), fill);
    return img;
}

void EventStream::validate() const {
    if (width <= 0 || height <= 0) throw InputError("event stream: sensor size must be positive");
    if (!(t_begin <= t_end)) throw InputError("event stream: window must satisfy t_begin <= t_end");
    double prev = t_begin;
    std::size_t i = 0;
    for (const Event& e : events) {
        const std::string where = " at event " + std::to_string(i);
        if (e.p != 1 && e.p != -1) throw InputError("event stream: polarity must be -1 or +1" + where);
        if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height)
            throw InputError("event stream: coordinates out of bounds" + where);
        if (!(e.t >= t_begin && e.t <= t_end)) throw InputError("event stream: timestamp outside window" + where);
        if (e.t < prev) throw InputError("event stream: timestamps not sorted" + where);
        prev = e.t;
        ++i;
    }
}

void PointCloud::validate() const {
    std::size_t i = 0;
    for (const Vec3& p : points) {
        if (!std::isfinite(p.x) || !std::isfinite(p.y) || !std::isfinite(p.z))
            throw InputError("point cloud: non-finite coordinate at point " + std::to_string(i));
        ++i;
    }
}

Image EventVoxelGrid::accumulated_frame() const {
    Image out = Image::make(width, height, 1, Semantics::Intensity);
    const std::size_t n = out.data.size();
    for (std::size_t i = 0; i < n; ++i) {
        std::int64_t c = 0;
        for (const auto& plane : counts) c += plane[i];
        out.data[i] = static_cast<double>(c) * threshold;
    }
    return out;
}

FlowField2D FlowField2D::make(int w, int h) {
    FlowField2D f;
    f.width = w;
    f.height = h;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    f.du.assign(n, 0.0);
    f.dv.assign(n, 0.0);
    f.valid.assign(n, 0);
    return f;
}

const char* axis_name(Axis a) {
    switch (a) {
        case Axis::X: return "x";
        case Axis::Y: return "y";
        case Axis::Z: return "z";
    }
    return "?";
}

const char* modality_name(Modality m) {
    switch (m) {
        case Modality::Rgb: return "rgb";
        case Modality::Event: return "event";
        case Modality::Lidar: return "lidar";
    }
    return "?";
}

CorrelationVolume CorrelationVolume::make(Axis a, Modality m, int radius, int samples, int slice) {
    if (radius < 1) throw InputError("correlation volume: radius must be >= 1");
    if (samples < 0) throw InputError("correlation volume: negative sample count");
    CorrelationVolume cv;
    cv.axis = a;
    cv.modality = m;
    cv.slice_index = slice;
    cv.radius = radius;
    cv.sample_count = samples;
    cv.scores.assign(static_cast<std::size_t>(samples) * static_cast<std::size_t>(2 * radius + 1), 0.0);
    return cv;
}

}  // namespace vmf
