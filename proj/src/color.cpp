#include "vmf/color.hpp"

#include <algorithm>

namespace vmf {

namespace {

constexpr double kR = 0.299;
constexpr double kG = 0.587;
constexpr double kB = 0.114;

void check_plane(const Image& img, const char* name) {
    if (img.channels != 1) throw InputError(std::string(name) + ": expected a single-channel plane");
}

}  // namespace

YuvPlanes rgb_to_yuv(const Image& rgb) {
    if (rgb.semantics != Semantics::Rgb || rgb.channels != 3)
        throw InputError("rgb_to_yuv: input must be a 3-channel RGB image");
    YuvPlanes out;
    out.y = Image::make(rgb.width, rgb.height, 1, Semantics::Luma);
    out.u = Image::make(rgb.width, rgb.height, 1, Semantics::Yuv);
    out.v = Image::make(rgb.width, rgb.height, 1, Semantics::Yuv);
    const std::size_t n = rgb.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double r = rgb.data[i * 3 + 0];
        const double g = rgb.data[i * 3 + 1];
        const double b = rgb.data[i * 3 + 2];
        const double y = kR * r + kG * g + kB * b;
        out.y.data[i] = y;
        out.u.data[i] = (b - y) / (2.0 * (1.0 - kB)) + 0.5;
        out.v.data[i] = (r - y) / (2.0 * (1.0 - kR)) + 0.5;
    }
    return out;
}

Image yuv_to_rgb(const Image& y, const Image& u, const Image& v) {
    check_plane(y, "yuv_to_rgb: Y");
    check_plane(u, "yuv_to_rgb: U");
    check_plane(v, "yuv_to_rgb: V");
    if (!y.same_shape(u) || !y.same_shape(v)) throw InputError("yuv_to_rgb: plane shapes differ");
    Image rgb = Image::make(y.width, y.height, 3, Semantics::Rgb);
    const std::size_t n = y.pixel_count();
    for (std::size_t i = 0; i < n; ++i) {
        const double yy = y.data[i];
        const double du = u.data[i] - 0.5;
        const double dv = v.data[i] - 0.5;
        const double r = yy + dv * 2.0 * (1.0 - kR);
        const double b = yy + du * 2.0 * (1.0 - kB);
        const double g = (yy - kR * r - kB * b) / kG;
        rgb.data[i * 3 + 0] = std::clamp(r, 0.0, 1.0);
        rgb.data[i * 3 + 1] = std::clamp(g, 0.0, 1.0);
        rgb.data[i * 3 + 2] = std::clamp(b, 0.0, 1.0);
    }
    return rgb;
}

}  // namespace vmf
