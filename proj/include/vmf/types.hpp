#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vmf/numeric.hpp"

namespace vmf {

struct Vec3 {
    double x = 0.0, y = 0.0, z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
};

/// Pinhole intrinsics of the shared event/RGB camera frame.
struct CameraIntrinsics {
    double f = 0.0;   // focal length, pixels
    double cx = 0.0;  // principal point x, pixels
    double cy = 0.0;  // principal point y, pixels
    int width = 0;
    int height = 0;

    void validate() const;
};

enum class Semantics : std::uint8_t { Rgb, Yuv, Luma, Intensity, Depth };

const char* semantics_name(Semantics s);

/// Row-major raster with channel-interleaved samples. RGB/YUV/LUMA data live
/// in [0,1]; INTENSITY is a signed event accumulation; DEPTH is meters with 0
/// meaning missing.
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    Semantics semantics = Semantics::Luma;
    std::vector<double> data;

    static Image make(int w, int h, int c, Semantics s, double fill = 0.0);

    std::size_t index(int x, int y, int c = 0) const {
        return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x)) *
                   static_cast<std::size_t>(channels) +
               static_cast<std::size_t>(c);
    }
    double& at(int x, int y, int c = 0) { return data[index(x, y, c)]; }
    double at(int x, int y, int c = 0) const { return data[index(x, y, c)]; }
    bool in_bounds(int x, int y) const { return x >= 0 && x < width && y >= 0 && y < height; }
    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * static_cast<std::size_t>(height); }
};

struct Event {
    double t = 0.0;  // seconds
    int x = 0;
    int y = 0;
    int p = 1;  // polarity, -1 or +1
};

/// Time-ordered event stream over a window, with sensor geometry.
struct EventStream {
    int width = 0;
    int height = 0;
    double t_begin = 0.0;
    double t_end = 0.0;
    std::vector<Event> events;

    /// Checks ordering, polarity alphabet, bounds and window membership.
    /// Throws InputError naming the first offending event.
    void validate() const;
};

struct PointCloud {
    std::vector<Vec3> points;

    void validate() const;
    std::size_t size() const { return points.size(); }
};

/// LiDAR points projected into the camera plane. At most one entry per
/// rounded pixel (nearest depth wins).
struct ProjectedPoints {
    struct Entry {
        double u = 0.0;
        double v = 0.0;
        double d = 0.0;  // depth, meters
        int source = -1; // index into the originating PointCloud; -1 for densified entries
    };
    std::vector<Entry> entries;
};

/// Temporal voxelization of an event stream. Slice images hold signed
/// polarity * threshold per pixel; integer polarity counts are kept alongside
/// so slice sums can be reproduced bit-exactly (sum counts, scale once).
struct EventVoxelGrid {
    int width = 0;
    int height = 0;
    int slice_count = 0;
    double threshold = 0.0;
    std::vector<Image> slices;                    // INTENSITY, one per temporal slice
    std::vector<std::vector<std::int64_t>> counts; // per-slice per-pixel polarity sums

    /// Full-window accumulation: per pixel, (sum of all slice counts) * threshold.
    Image accumulated_frame() const;
};

/// Dense 2D flow in pixels/frame. Invalid pixels carry (0,0).
struct FlowField2D {
    int width = 0;
    int height = 0;
    std::vector<double> du;
    std::vector<double> dv;
    std::vector<std::uint8_t> valid;

    static FlowField2D make(int w, int h);
    std::size_t index(int x, int y) const {
        return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
    }
};

/// Sparse 3D scene flow in meters/frame over a sampled point set.
struct FlowField3D {
    std::vector<Vec3> flow;
    std::vector<std::uint8_t> valid;

    std::size_t size() const { return flow.size(); }
};

/// Global fusion weights for the luminance blend.
struct FusionWeights {
    double event_weight = 1.0;  // weight on the event intensity frame
    double rgb_weight = 1.0;    // weight on the RGB luma
};

enum class Axis : std::uint8_t { X, Y, Z };
enum class Modality : std::uint8_t { Rgb, Event, Lidar };

const char* axis_name(Axis a);
const char* modality_name(Modality m);

/// Per-sample match scores along one displacement axis. Each sample owns a
/// profile of 2*radius+1 bins; out-of-data lookups hold kSentinel.
struct CorrelationVolume {
    Axis axis = Axis::X;
    Modality modality = Modality::Rgb;
    int slice_index = -1;  // temporal slice id for event volumes, else -1
    int radius = 0;
    int sample_count = 0;
    std::vector<double> scores;  // sample_count x (2*radius+1), row-major

    static CorrelationVolume make(Axis a, Modality m, int radius, int samples, int slice = -1);

    int bins() const { return 2 * radius + 1; }
    double& at(int sample, int bin) { return scores[static_cast<std::size_t>(sample) * static_cast<std::size_t>(bins()) + static_cast<std::size_t>(bin)]; }
    double at(int sample, int bin) const { return scores[static_cast<std::size_t>(sample) * static_cast<std::size_t>(bins()) + static_cast<std::size_t>(bin)]; }
};

/// N points sampled from a cloud together with their image-plane projections.
struct SampleSet {
    std::vector<int> indices;  // into the source PointCloud
    std::vector<double> u;
    std::vector<double> v;

    int size() const { return static_cast<int>(indices.size()); }
};

}  // namespace vmf
