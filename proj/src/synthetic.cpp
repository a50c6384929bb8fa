#include "vmf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "vmf/color.hpp"
#include "vmf/correlation.hpp"
#include "vmf/io.hpp"
#include "vmf/luminance.hpp"

namespace vmf {

namespace {

// Procedural surface texture: a seeded noise grid sampled bilinearly in
// material coordinates (one texel per pixel at the surface's rest depth).
// Point features decorrelate within a texel, which the correlation volumes
// need; integer-pixel scene displacements make frame resampling exact.
struct Texture {
    int w = 0, h = 0;
    double texel = 1.0;
    double x0 = 0.0, y0 = 0.0;
    std::vector<double> vals[3];

    static Texture make(Rng& rng, double texel, double x0, double y0, double width_m, double height_m) {
        Texture t;
        t.texel = texel;
        t.x0 = x0;
        t.y0 = y0;
        t.w = static_cast<int>(std::ceil(width_m / texel)) + 3;
        t.h = static_cast<int>(std::ceil(height_m / texel)) + 3;
        for (int c = 0; c < 3; ++c) {
            t.vals[c].resize(static_cast<std::size_t>(t.w) * static_cast<std::size_t>(t.h));
            for (double& v : t.vals[c]) v = rng.uniform(0.08, 0.92);
        }
        return t;
    }

    double value(int channel, double x, double y) const {
        const double gx = std::clamp((x - x0) / texel, 0.0, static_cast<double>(w - 1));
        const double gy = std::clamp((y - y0) / texel, 0.0, static_cast<double>(h - 1));
        const int ix = std::min(w - 2, static_cast<int>(gx));
        const int iy = std::min(h - 2, static_cast<int>(gy));
        const double fx = gx - ix, fy = gy - iy;
        const std::vector<double>& g = vals[channel];
        const std::size_t row = static_cast<std::size_t>(iy) * static_cast<std::size_t>(w) + static_cast<std::size_t>(ix);
        return (1.0 - fx) * (1.0 - fy) * g[row] + fx * (1.0 - fy) * g[row + 1] +
               (1.0 - fx) * fy * g[row + static_cast<std::size_t>(w)] + fx * fy * g[row + static_cast<std::size_t>(w) + 1];
    }
};

struct Hit {
    double z = 0.0;
    double mx = 0.0, my = 0.0;  // material coordinates on the surface
    bool on_quad = false;
};

struct SceneGeometry {
    GeneratorConfig cfg;
    CameraIntrinsics K;
    double qx0 = 0.0, qy0 = 0.0, qx1 = 0.0, qy1 = 0.0;  // quad rect, frame-1 camera coords

    // frame 0 or 1; the scene translates by cfg.translate between them.
    Hit trace(double u, double v, int frame) const {
        const double tx = frame * cfg.translate_x;
        const double ty = frame * cfg.translate_y;
        const double tz = frame * cfg.translate_z;
        Hit hit;
        if (cfg.quad_enabled) {
            const double zq = cfg.quad_depth + tz;
            const double x = (u - K.cx) * zq / K.f;
            const double y = (v - K.cy) * zq / K.f;
            if (x - tx >= qx0 && x - tx <= qx1 && y - ty >= qy0 && y - ty <= qy1) {
                hit.z = zq;
                hit.mx = x - tx;
                hit.my = y - ty;
                hit.on_quad = true;
                return hit;
            }
        }
        const double zp = cfg.plane_depth + tz;
        hit.z = zp;
        hit.mx = (u - K.cx) * zp / K.f - tx;
        hit.my = (v - K.cy) * zp / K.f - ty;
        return hit;
    }
};

Image degrade(const Image& rgb, const GeneratorConfig& cfg, Rng& rng) {
    if (!cfg.low_light) return rgb;
    Image out = rgb;
    for (double& v : out.data) v = std::clamp(cfg.low_light_gain * v + cfg.noise_sigma * rng.normal(), 0.0, 1.0);
    return out;
}

Image luma_of(const Image& rgb) {
    Image l = Image::make(rgb.width, rgb.height, 1, Semantics::Luma);
    for (std::size_t i = 0; i < rgb.pixel_count(); ++i)
        l.data[i] = 0.299 * rgb.data[i * 3] + 0.587 * rgb.data[i * 3 + 1] + 0.114 * rgb.data[i * 3 + 2];
    return l;
}

}  // namespace

SyntheticScene generate_synthetic(const GeneratorConfig& cfg, double event_threshold, std::uint64_t seed) {
    if (!(event_threshold > 0.0)) throw InputError("generate_synthetic: event threshold must be > 0");
    if (cfg.width < 8 || cfg.height < 8) throw InputError("generate_synthetic: image too small");
    if (!(cfg.plane_depth > 0.0) || !(cfg.plane_depth + cfg.translate_z > 0.0))
        throw InputError("generate_synthetic: plane must stay in front of the camera");
    if (cfg.quad_enabled) {
        if (!(cfg.quad_depth > 0.0) || !(cfg.quad_depth + cfg.translate_z > 0.0))
            throw InputError("generate_synthetic: quad must stay in front of the camera");
        if (!(cfg.quad_depth < cfg.plane_depth))
            throw InputError("generate_synthetic: quad must occlude the plane (quad_depth < plane_depth)");
        if (!(cfg.quad_x0 < cfg.quad_x1 && cfg.quad_y0 < cfg.quad_y1))
            throw InputError("generate_synthetic: degenerate quad rectangle");
    }
    if (!(cfg.window > 0.0)) throw InputError("generate_synthetic: window must be > 0");

    SceneGeometry geo;
    geo.cfg = cfg;
    geo.K.f = cfg.focal;
    geo.K.cx = cfg.width / 2.0;
    geo.K.cy = cfg.height / 2.0;
    geo.K.width = cfg.width;
    geo.K.height = cfg.height;
    geo.qx0 = (cfg.quad_x0 * cfg.width - geo.K.cx) * cfg.quad_depth / cfg.focal;
    geo.qx1 = (cfg.quad_x1 * cfg.width - geo.K.cx) * cfg.quad_depth / cfg.focal;
    geo.qy0 = (cfg.quad_y0 * cfg.height - geo.K.cy) * cfg.quad_depth / cfg.focal;
    geo.qy1 = (cfg.quad_y1 * cfg.height - geo.K.cy) * cfg.quad_depth / cfg.focal;

    Rng rng(seed);
    // One texel per pixel at each surface's rest depth; the grid covers the
    // visible material extent plus a motion margin.
    const double margin = 1.0 + std::abs(cfg.translate_x) + std::abs(cfg.translate_y);
    const double plane_texel = cfg.plane_depth / cfg.focal;
    const double px0 = (0.0 - geo.K.cx) * cfg.plane_depth / cfg.focal - margin;
    const double py0 = (0.0 - geo.K.cy) * cfg.plane_depth / cfg.focal - margin;
    const Texture plane_tex = Texture::make(rng, plane_texel, px0, py0,
                                            cfg.width * plane_texel + 2.0 * margin,
                                            cfg.height * plane_texel + 2.0 * margin);
    const double quad_texel = std::max(cfg.quad_depth, 1e-6) / cfg.focal;
    const Texture quad_tex = Texture::make(rng, quad_texel, geo.qx0 - margin, geo.qy0 - margin,
                                           geo.qx1 - geo.qx0 + 2.0 * margin, geo.qy1 - geo.qy0 + 2.0 * margin);

    SyntheticScene scene;
    scene.K = geo.K;
    scene.translation = {cfg.translate_x, cfg.translate_y, cfg.translate_z};
    scene.event_threshold = event_threshold;

    auto render = [&](int frame) {
        Image rgb = Image::make(cfg.width, cfg.height, 3, Semantics::Rgb);
        for (int y = 0; y < cfg.height; ++y)
            for (int x = 0; x < cfg.width; ++x) {
                const Hit hit = geo.trace(x, y, frame);
                const Texture& tex = hit.on_quad ? quad_tex : plane_tex;
                for (int c = 0; c < 3; ++c) rgb.at(x, y, c) = tex.value(c, hit.mx, hit.my);
            }
        return rgb;
    };
    const Image clean_t = render(0);
    const Image clean_t2 = render(1);
    scene.clean_luma_t = luma_of(clean_t);
    scene.clean_luma_t2 = luma_of(clean_t2);
    scene.frame_t = degrade(clean_t, cfg, rng);
    scene.frame_t2 = degrade(clean_t2, cfg, rng);

    // Ground truth depth, flow and occlusion from the frame-1 geometry.
    scene.gt_depth_t = Image::make(cfg.width, cfg.height, 1, Semantics::Depth);
    scene.gt_flow = FlowField2D::make(cfg.width, cfg.height);
    scene.gt_occlusion = Image::make(cfg.width, cfg.height, 1, Semantics::Luma);
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const Hit hit = geo.trace(x, y, 0);
            scene.gt_depth_t.at(x, y) = hit.z;
            const double z2 = hit.z + cfg.translate_z;
            const double u2 = geo.K.f * (hit.mx + cfg.translate_x) / z2 + geo.K.cx;
            const double v2 = geo.K.f * (hit.my + cfg.translate_y) / z2 + geo.K.cy;
            const std::size_t i = scene.gt_flow.index(x, y);
            scene.gt_flow.du[i] = u2 - x;
            scene.gt_flow.dv[i] = v2 - y;
            scene.gt_flow.valid[i] = 1;
            bool visible = u2 >= 0.0 && u2 <= cfg.width - 1 && v2 >= 0.0 && v2 <= cfg.height - 1;
            if (visible && !hit.on_quad && cfg.quad_enabled) visible = !geo.trace(u2, v2, 1).on_quad;
            scene.gt_occlusion.at(x, y) = visible ? 1.0 : 0.0;
        }
    }

    // Events quantize the clean per-pixel luma change; timestamps are spread
    // evenly across the window.
    scene.events.width = cfg.width;
    scene.events.height = cfg.height;
    scene.events.t_begin = 0.0;
    scene.events.t_end = cfg.window;
    for (int y = 0; y < cfg.height; ++y) {
        for (int x = 0; x < cfg.width; ++x) {
            const double delta = scene.clean_luma_t2.at(x, y) - scene.clean_luma_t.at(x, y);
            const int n = static_cast<int>(std::floor(std::abs(delta) / event_threshold));
            const int p = delta >= 0.0 ? 1 : -1;
            for (int j = 0; j < n; ++j) {
                Event e;
                e.t = (j + 1) * cfg.window / (n + 1);
                e.x = x;
                e.y = y;
                e.p = p;
                scene.events.events.push_back(e);
            }
        }
    }
    std::sort(scene.events.events.begin(), scene.events.events.end(), [](const Event& a, const Event& b) {
        if (a.t != b.t) return a.t < b.t;
        if (a.y != b.y) return a.y < b.y;
        return a.x < b.x;
    });

    // LiDAR: returns on every beam_step-th row below the masked top band.
    // Returns are additionally gated by surface reflectivity (the texture at
    // the material point), so the cloud's density pattern is bound to the
    // scene and translates with it.
    const int first_row = static_cast<int>(std::ceil(cfg.beam_top_fraction * cfg.height));
    scene.beam_mask = Image::make(cfg.width, cfg.height, 1, Semantics::Luma);
    auto reflective = [&](const Hit& hit) {
        const Texture& tex = hit.on_quad ? quad_tex : plane_tex;
        return tex.value(0, hit.mx, hit.my) >= cfg.lidar_reflectivity_floor;
    };
    for (int y = 0; y < cfg.height; ++y) {
        if (y % cfg.beam_step != 0 || y < first_row) continue;
        for (int x = 0; x < cfg.width; ++x) {
            const Hit hit1 = geo.trace(x, y, 0);
            if (reflective(hit1)) {
                scene.beam_mask.at(x, y) = 1.0;
                const double z1 = hit1.z;
                scene.cloud_t.points.push_back(
                    {(x - geo.K.cx) * z1 / geo.K.f, (y - geo.K.cy) * z1 / geo.K.f, z1});
            }
            const Hit hit2 = geo.trace(x, y, 1);
            if (reflective(hit2)) {
                const double z2 = hit2.z;
                scene.cloud_t2.points.push_back(
                    {(x - geo.K.cx) * z2 / geo.K.f, (y - geo.K.cy) * z2 / geo.K.f, z2});
            }
        }
    }

    scene.self_check();
    return scene;
}

void SyntheticScene::self_check() const {
    // Event quantization bound: re-accumulating the stream must land within
    // one threshold of the true per-pixel luma change.
    if (clean_luma_t.width > 0 && event_threshold > 0.0) {
        const Image acc = accumulate_intensity(events, event_threshold);
        for (int y = 0; y < clean_luma_t.height; ++y)
            for (int x = 0; x < clean_luma_t.width; ++x) {
                const double delta = clean_luma_t2.at(x, y) - clean_luma_t.at(x, y);
                if (std::abs(acc.at(x, y) - delta) > event_threshold + 1e-12)
                    throw NumericError("synthetic scene self-check: event quantization bound violated");
            }
    }

    // Flow self-consistency: warping the clean t2 frame by the GT flow must
    // reproduce the clean t frame on non-occluded pixels within 2/255.
    if (clean_luma_t.width > 0) {
        WarpedImage warped = warp_image(clean_luma_t2, gt_flow);
        for (int y = 0; y < clean_luma_t.height; ++y)
            for (int x = 0; x < clean_luma_t.width; ++x) {
                if (gt_occlusion.at(x, y) == 0.0 || !warped.valid[gt_flow.index(x, y)]) continue;
                const double err = std::abs(warped.image.at(x, y) - clean_luma_t.at(x, y));
                if (err > 2.0 / 255.0)
                    throw NumericError("synthetic scene self-check: warp consistency violated (err " +
                                       std::to_string(err) + ")");
            }
    }

    // Projection consistency of the GT flow against the rigid motion, probed
    // on the LiDAR rows where depth is known exactly.
    for (std::size_t i = 0; i < cloud_t.points.size(); ++i) {
        const Vec3& p = cloud_t.points[i];
        const double u1 = K.f * p.x / p.z + K.cx;
        const double v1 = K.f * p.y / p.z + K.cy;
        const int xi = static_cast<int>(std::llround(u1));
        const int yi = static_cast<int>(std::llround(v1));
        if (xi < 0 || xi >= K.width || yi < 0 || yi >= K.height) continue;
        const Vec3 q = p + translation;
        if (!(q.z > 0.0)) continue;
        const double du = K.f * q.x / q.z + K.cx - u1;
        const std::size_t idx = gt_flow.index(xi, yi);
        // Beam points sit on pixel centers, so this comparison is exact up to
        // generator rounding.
        if (std::abs(du - gt_flow.du[idx]) > 1e-6)
            throw NumericError("synthetic scene self-check: flow/projection mismatch");
    }

    events.validate();
    cloud_t.validate();
    cloud_t2.validate();
}

namespace {

void save_scene_meta(const SyntheticScene& scene, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError(path + ": cannot open for writing");
    char buf[96];
    auto line = [&](const char* key, double v) {
        std::snprintf(buf, sizeof(buf), "%s = %.17g\n", key, v);
        f << buf;
    };
    line("focal", scene.K.f);
    line("cx", scene.K.cx);
    line("cy", scene.K.cy);
    line("translate_x", scene.translation.x);
    line("translate_y", scene.translation.y);
    line("translate_z", scene.translation.z);
    line("event_threshold", scene.event_threshold);
    if (!f) throw InputError(path + ": write failed");
}

void load_scene_meta(SyntheticScene& scene, const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError(path + ": cannot open");
    std::string key, eq;
    double value;
    while (f >> key >> eq >> value) {
        if (eq != "=") throw InputError(path + ": expected `key = value`");
        if (key == "focal") scene.K.f = value;
        else if (key == "cx") scene.K.cx = value;
        else if (key == "cy") scene.K.cy = value;
        else if (key == "translate_x") scene.translation.x = value;
        else if (key == "translate_y") scene.translation.y = value;
        else if (key == "translate_z") scene.translation.z = value;
        else if (key == "event_threshold") scene.event_threshold = value;
        else throw InputError(path + ": unknown key `" + key + "`");
    }
}

}  // namespace

void save_scene(const SyntheticScene& scene, const std::string& dir) {
    save_image(scene.frame_t, dir + "/frame_t.ppm");
    save_image(scene.frame_t2, dir + "/frame_t2.ppm");
    save_events(scene.events, dir + "/events.txt");
    save_point_cloud(scene.cloud_t, dir + "/cloud_t.txt");
    save_point_cloud(scene.cloud_t2, dir + "/cloud_t2.txt");
    save_image(scene.gt_depth_t, dir + "/gt_depth_t.pgm");
    save_flow(scene.gt_flow, dir + "/gt_flow.vmfl");
    save_image(scene.gt_occlusion, dir + "/gt_occlusion.pgm");
    save_image(scene.beam_mask, dir + "/beam_mask.pgm");
    save_scene_meta(scene, dir + "/scene.cfg");
}

SyntheticScene load_scene(const std::string& dir) {
    SyntheticScene scene;
    scene.frame_t = load_image(dir + "/frame_t.ppm");
    scene.frame_t2 = load_image(dir + "/frame_t2.ppm");
    scene.events = load_events(dir + "/events.txt");
    scene.cloud_t = load_point_cloud(dir + "/cloud_t.txt");
    scene.cloud_t2 = load_point_cloud(dir + "/cloud_t2.txt");
    scene.gt_depth_t = load_image(dir + "/gt_depth_t.pgm");
    if (scene.gt_depth_t.semantics != Semantics::Depth)
        throw InputError(dir + "/gt_depth_t.pgm: missing depth header comment");
    scene.gt_flow = load_flow(dir + "/gt_flow.vmfl");
    scene.gt_occlusion = load_image(dir + "/gt_occlusion.pgm");
    scene.beam_mask = load_image(dir + "/beam_mask.pgm");
    scene.K.width = scene.frame_t.width;
    scene.K.height = scene.frame_t.height;
    load_scene_meta(scene, dir + "/scene.cfg");
    scene.K.validate();
    return scene;
}

}  // namespace vmf
