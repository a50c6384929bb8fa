#include "vmf/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <vector>

namespace vmf {

namespace {

[[noreturn]] void fail(const std::string& path, std::size_t line, const std::string& msg) {
    throw InputError(path + ":" + std::to_string(line) + ": " + msg);
}

[[noreturn]] void fail(const std::string& path, const std::string& msg) {
    throw InputError(path + ": " + msg);
}

std::ifstream open_text(const std::string& path) {
    std::ifstream f(path);
    if (!f) fail(path, "cannot open file");
    return f;
}

std::ofstream open_out(const std::string& path, bool binary) {
    std::ofstream f(path, binary ? std::ios::binary : std::ios::out);
    if (!f) fail(path, "cannot open file for writing");
    return f;
}

// Strips an inline comment and surrounding whitespace; returns empty for
// comment-only or blank lines.
std::string strip_line(const std::string& raw) {
    std::string s = raw;
    const auto hash = s.find('#');
    if (hash != std::string::npos) s.erase(hash);
    const auto first = s.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r\n");
    return s.substr(first, last - first + 1);
}

bool parse_doubles(const std::string& s, std::vector<double>& out) {
    out.clear();
    std::istringstream is(s);
    double v;
    while (is >> v) out.push_back(v);
    if (!is.eof()) return false;  // trailing garbage
    return true;
}

void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff), static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff), static_cast<unsigned char>((v >> 24) & 0xff)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32_le(std::ostream& os, float v) {
    std::uint32_t bits;
    static_assert(sizeof(bits) == sizeof(v));
    std::memcpy(&bits, &v, 4);
    write_u32_le(os, bits);
}

bool read_u32_le(std::istream& is, std::uint32_t& v) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) return false;
    v = static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
        (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    return true;
}

bool read_f32_le(std::istream& is, float& v) {
    std::uint32_t bits;
    if (!read_u32_le(is, bits)) return false;
    std::memcpy(&v, &bits, 4);
    return true;
}

}  // namespace

EventStream load_events(const std::string& path) {
    std::ifstream f = open_text(path);
    EventStream ev;
    bool have_geometry = false;
    bool have_window = false;
    int max_x = -1, max_y = -1;
    double min_t = 0.0, max_t = 0.0;
    bool have_t = false;

    std::string raw;
    std::size_t line_no = 0;
    double prev_t = -std::numeric_limits<double>::infinity();
    while (std::getline(f, raw)) {
        ++line_no;
        // The saver's geometry comment is authoritative when present.
        if (raw.rfind("# width ", 0) == 0) {
            std::istringstream is(raw.substr(1));
            std::string kw, kh, kwin;
            int w = 0, h = 0;
            double t0 = 0.0, t1 = 0.0;
            if (is >> kw >> w >> kh >> h >> kwin >> t0 >> t1 && kw == "width" && kh == "height" && kwin == "window") {
                if (w <= 0 || h <= 0) fail(path, line_no, "bad geometry header");
                if (!(t0 <= t1)) fail(path, line_no, "bad window header");
                ev.width = w;
                ev.height = h;
                ev.t_begin = t0;
                ev.t_end = t1;
                have_geometry = have_window = true;
            }
            continue;
        }
        const std::string s = strip_line(raw);
        if (s.empty()) continue;
        std::vector<double> vals;
        if (!parse_doubles(s, vals) || vals.size() != 4) fail(path, line_no, "expected `t x y p`");
        Event e;
        e.t = vals[0];
        if (!std::isfinite(e.t)) fail(path, line_no, "non-finite timestamp");
        if (vals[1] != std::floor(vals[1]) || vals[2] != std::floor(vals[2]))
            fail(path, line_no, "coordinates must be integers");
        e.x = static_cast<int>(vals[1]);
        e.y = static_cast<int>(vals[2]);
        if (vals[3] != 1.0 && vals[3] != -1.0) fail(path, line_no, "polarity must be -1 or +1");
        e.p = static_cast<int>(vals[3]);
        if (e.x < 0 || e.y < 0) fail(path, line_no, "negative coordinate");
        if (have_geometry && (e.x >= ev.width || e.y >= ev.height)) fail(path, line_no, "coordinate out of bounds");
        if (have_window && !(e.t >= ev.t_begin && e.t <= ev.t_end)) fail(path, line_no, "timestamp outside window");
        if (e.t < prev_t) fail(path, line_no, "timestamps not sorted");
        prev_t = e.t;
        max_x = std::max(max_x, e.x);
        max_y = std::max(max_y, e.y);
        if (!have_t) {
            min_t = max_t = e.t;
            have_t = true;
        } else {
            min_t = std::min(min_t, e.t);
            max_t = std::max(max_t, e.t);
        }
        ev.events.push_back(e);
    }
    if (!have_geometry) {
        ev.width = std::max(1, max_x + 1);
        ev.height = std::max(1, max_y + 1);
    }
    if (!have_window) {
        ev.t_begin = have_t ? min_t : 0.0;
        ev.t_end = have_t ? max_t : 0.0;
    }
    ev.validate();
    return ev;
}

void save_events(const EventStream& ev, const std::string& path) {
    ev.validate();
    std::ofstream f = open_out(path, false);
    char buf[160];
    std::snprintf(buf, sizeof(buf), "# width %d height %d window %.17g %.17g\n", ev.width, ev.height, ev.t_begin,
                  ev.t_end);
    f << buf;
    for (const Event& e : ev.events) {
        std::snprintf(buf, sizeof(buf), "%.17g %d %d %d\n", e.t, e.x, e.y, e.p);
        f << buf;
    }
    if (!f) fail(path, "write failed");
}

PointCloud load_point_cloud(const std::string& path) {
    std::ifstream f = open_text(path);
    PointCloud pc;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(f, raw)) {
        ++line_no;
        const std::string s = strip_line(raw);
        if (s.empty()) continue;
        std::vector<double> vals;
        if (!parse_doubles(s, vals) || vals.size() != 3) fail(path, line_no, "expected `x y z`");
        if (!std::isfinite(vals[0]) || !std::isfinite(vals[1]) || !std::isfinite(vals[2]))
            fail(path, line_no, "non-finite coordinate");
        pc.points.push_back({vals[0], vals[1], vals[2]});
    }
    return pc;
}

void save_point_cloud(const PointCloud& pc, const std::string& path, const std::string& header_comment) {
    pc.validate();
    std::ofstream f = open_out(path, false);
    if (!header_comment.empty()) f << "#" << header_comment << "\n";
    char buf[128];
    for (const Vec3& p : pc.points) {
        std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p.x, p.y, p.z);
        f << buf;
    }
    if (!f) fail(path, "write failed");
}

namespace {

constexpr const char* kDepthComment = "# depth millimeters";

struct PnmHeader {
    int kind = 0;  // 5 or 6
    int width = 0;
    int height = 0;
    int maxval = 0;
    bool depth_comment = false;
};

PnmHeader read_pnm_header(std::istream& is, const std::string& path) {
    PnmHeader h;
    std::string magic;
    // Header tokens are whitespace-separated; comments run to end of line.
    auto next_token = [&](std::string& tok) {
        tok.clear();
        int c;
        while ((c = is.get()) != EOF) {
            if (c == '#') {
                std::string comment;
                while ((c = is.get()) != EOF && c != '\n') comment.push_back(static_cast<char>(c));
                if (("#" + comment).find("depth millimeters") != std::string::npos) h.depth_comment = true;
                continue;
            }
            if (std::isspace(c)) {
                if (!tok.empty()) return true;
                continue;
            }
            tok.push_back(static_cast<char>(c));
        }
        return !tok.empty();
    };
    std::string tok;
    if (!next_token(magic) || (magic != "P5" && magic != "P6")) fail(path, "not a P5/P6 PNM file");
    h.kind = magic == "P5" ? 5 : 6;
    int fields[3];
    for (int i = 0; i < 3; ++i) {
        if (!next_token(tok)) fail(path, "truncated PNM header");
        try {
            fields[i] = std::stoi(tok);
        } catch (...) {
            fail(path, "bad PNM header field `" + tok + "`");
        }
    }
    h.width = fields[0];
    h.height = fields[1];
    h.maxval = fields[2];
    if (h.width <= 0 || h.height <= 0) fail(path, "bad PNM dimensions");
    if (h.maxval <= 0 || h.maxval > 65535) fail(path, "unsupported PNM maxval");
    return h;
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open file");
    const PnmHeader h = read_pnm_header(f, path);
    const int channels = h.kind == 6 ? 3 : 1;
    const bool wide = h.maxval > 255;
    const std::size_t samples =
        static_cast<std::size_t>(h.width) * static_cast<std::size_t>(h.height) * static_cast<std::size_t>(channels);
    std::vector<unsigned char> bytes(samples * (wide ? 2 : 1));
    if (!f.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size())))
        fail(path, "truncated pixel data");

    Semantics sem;
    if (h.kind == 6) sem = Semantics::Rgb;
    else if (h.depth_comment) sem = Semantics::Depth;
    else sem = Semantics::Luma;

    Image img = Image::make(h.width, h.height, channels, sem);
    for (std::size_t i = 0; i < samples; ++i) {
        int raw;
        if (wide) raw = (static_cast<int>(bytes[i * 2]) << 8) | bytes[i * 2 + 1];  // PNM 16-bit is big-endian
        else raw = bytes[i];
        if (raw > h.maxval) fail(path, "sample exceeds maxval at offset " + std::to_string(i));
        img.data[i] = sem == Semantics::Depth ? static_cast<double>(raw) / 1000.0
                                              : static_cast<double>(raw) / static_cast<double>(h.maxval);
    }
    return img;
}

void save_image(const Image& img, const std::string& path, int bits) {
    if (bits != 8 && bits != 16) fail(path, "bits must be 8 or 16");
    if (img.width <= 0 || img.height <= 0) fail(path, "empty image");
    const bool depth = img.semantics == Semantics::Depth;
    if (depth && img.channels != 1) fail(path, "depth images are single-channel");
    if (img.semantics == Semantics::Intensity) fail(path, "signed intensity frames have no PNM encoding");
    const bool wide = depth || bits == 16;
    const int maxval = wide ? 65535 : 255;

    std::ofstream f = open_out(path, true);
    f << (img.channels == 3 ? "P6" : "P5") << "\n";
    if (depth) f << kDepthComment << "\n";
    f << img.width << " " << img.height << "\n" << maxval << "\n";

    const std::size_t samples = img.data.size();
    for (std::size_t i = 0; i < samples; ++i) {
        int raw;
        if (depth) {
            raw = static_cast<int>(std::llround(img.data[i] * 1000.0));
            raw = std::clamp(raw, 0, 65535);
        } else {
            raw = static_cast<int>(std::llround(std::clamp(img.data[i], 0.0, 1.0) * maxval));
        }
        if (wide) {
            const unsigned char b[2] = {static_cast<unsigned char>((raw >> 8) & 0xff),
                                        static_cast<unsigned char>(raw & 0xff)};
            f.write(reinterpret_cast<const char*>(b), 2);
        } else {
            const unsigned char b = static_cast<unsigned char>(raw);
            f.write(reinterpret_cast<const char*>(&b), 1);
        }
    }
    if (!f) fail(path, "write failed");
}

FlowField2D load_flow(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(path, "cannot open file");
    char magic[4];
    if (!f.read(magic, 4) || std::string(magic, 4) != "VMFL") fail(path, "bad magic (expected VMFL)");
    std::uint32_t w = 0, h = 0;
    if (!read_u32_le(f, w) || !read_u32_le(f, h)) fail(path, "truncated header");
    if (w == 0 || h == 0 || static_cast<std::uint64_t>(w) * h > (1u << 28)) fail(path, "implausible dimensions");
    FlowField2D flow = FlowField2D::make(static_cast<int>(w), static_cast<int>(h));
    const std::size_t n = static_cast<std::size_t>(w) * h;
    for (std::size_t i = 0; i < n; ++i) {
        float du, dv;
        if (!read_f32_le(f, du) || !read_f32_le(f, dv)) fail(path, "truncated flow data at pixel " + std::to_string(i));
        if (!std::isfinite(du) || !std::isfinite(dv)) fail(path, "non-finite flow at pixel " + std::to_string(i));
        flow.du[i] = du;
        flow.dv[i] = dv;
    }
    for (std::size_t i = 0; i < n; ++i) {
        char m;
        if (!f.read(&m, 1)) fail(path, "truncated mask at pixel " + std::to_string(i));
        if (m != 0 && m != 1) fail(path, "mask byte must be 0 or 1 at pixel " + std::to_string(i));
        if (m == 0 && (flow.du[i] != 0.0f || flow.dv[i] != 0.0f))
            fail(path, "invalid pixel carries nonzero flow at pixel " + std::to_string(i));
        flow.valid[i] = static_cast<std::uint8_t>(m);
    }
    return flow;
}

void save_flow(const FlowField2D& flow, const std::string& path) {
    std::ofstream f = open_out(path, true);
    f.write("VMFL", 4);
    write_u32_le(f, static_cast<std::uint32_t>(flow.width));
    write_u32_le(f, static_cast<std::uint32_t>(flow.height));
    const std::size_t n = static_cast<std::size_t>(flow.width) * static_cast<std::size_t>(flow.height);
    for (std::size_t i = 0; i < n; ++i) {
        write_f32_le(f, static_cast<float>(flow.du[i]));
        write_f32_le(f, static_cast<float>(flow.dv[i]));
    }
    for (std::size_t i = 0; i < n; ++i) {
        const char m = static_cast<char>(flow.valid[i] ? 1 : 0);
        f.write(&m, 1);
    }
    if (!f) fail(path, "write failed");
}

void save_correlation_dump(const CorrelationVolume& cv, const std::string& path) {
    std::ofstream f = open_out(path, false);
    f << "# correlation N=" << cv.sample_count << " r=" << cv.radius << " axis=" << axis_name(cv.axis)
      << " modality=" << modality_name(cv.modality) << " slice=" << cv.slice_index << "\n";
    char buf[32];
    for (int s = 0; s < cv.sample_count; ++s) {
        for (int b = 0; b < cv.bins(); ++b) {
            std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(static_cast<float>(cv.at(s, b))));
            f << buf << (b + 1 == cv.bins() ? "\n" : " ");
        }
    }
    if (!f) fail(path, "write failed");
}

Image flow_visualization(const FlowField2D& flow, double max_mag) {
    if (max_mag <= 0.0) {
        for (std::size_t i = 0; i < flow.du.size(); ++i)
            if (flow.valid[i]) max_mag = std::max(max_mag, std::hypot(flow.du[i], flow.dv[i]));
        if (max_mag <= 0.0) max_mag = 1.0;
    }
    // Middlebury-style color wheel: six smoothly blended hue segments.
    static const int kSegments[6] = {15, 6, 4, 11, 13, 6};  // RY YG GC CB BM MR
    static const double kAnchors[7][3] = {{1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 1, 1},
                                          {0, 0, 1}, {1, 0, 1}, {1, 0, 0}};
    int total = 0;
    for (int s : kSegments) total += s;

    Image img = Image::make(flow.width, flow.height, 3, Semantics::Rgb);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const std::size_t i = flow.index(x, y);
            if (!flow.valid[i]) continue;
            const double mag = std::min(1.0, std::hypot(flow.du[i], flow.dv[i]) / max_mag);
            const double angle = std::atan2(-flow.dv[i], -flow.du[i]) / M_PI;  // [-1, 1]
            double pos = (angle + 1.0) / 2.0 * static_cast<double>(total);
            if (pos >= static_cast<double>(total)) pos -= static_cast<double>(total);
            int seg = 0;
            double acc = 0.0;
            while (seg < 5 && pos >= acc + kSegments[seg]) acc += kSegments[seg++];
            const double frac = (pos - acc) / kSegments[seg];
            for (int c = 0; c < 3; ++c) {
                const double col = (1.0 - frac) * kAnchors[seg][c] + frac * kAnchors[seg + 1][c];
                // Desaturate toward white for small magnitudes.
                img.at(x, y, c) = 1.0 - mag * (1.0 - col);
            }
        }
    }
    return img;
}

}  // namespace vmf
