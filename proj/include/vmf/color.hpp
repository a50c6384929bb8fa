#pragma once

#include "vmf/types.hpp"

namespace vmf {

struct YuvPlanes {
    Image y;  // LUMA
    Image u;  // chroma, neutral at 0.5
    Image v;
};

/// BT.601 full-range RGB -> YUV split into planes. Input must be tagged RGB
/// with values in [0,1].
YuvPlanes rgb_to_yuv(const Image& rgb);

/// BT.601 full-range inverse. Output clamped to [0,1]. Planes must share one
/// shape.
Image yuv_to_rgb(const Image& y, const Image& u, const Image& v);

}  // namespace vmf
