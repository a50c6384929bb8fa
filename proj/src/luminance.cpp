#include "vmf/luminance.hpp"

#include <algorithm>
#include <cmath>

#include "vmf/color.hpp"
#include "vmf/geometry.hpp"

namespace vmf {

namespace {

void check_shapes(const Image& a, const Image& b, const char* op) {
    if (!a.same_shape(b)) throw InputError(std::string(op) + ": shapes differ");
}

// Central difference with replicated borders.
void image_gradient(const Image& img, Image& gx, Image& gy) {
    gx = Image::make(img.width, img.height, 1, Semantics::Intensity);
    gy = Image::make(img.width, img.height, 1, Semantics::Intensity);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const int xm = std::max(0, x - 1), xp = std::min(img.width - 1, x + 1);
            const int ym = std::max(0, y - 1), yp = std::min(img.height - 1, y + 1);
            gx.at(x, y) = 0.5 * (img.at(xp, y) - img.at(xm, y));
            gy.at(x, y) = 0.5 * (img.at(x, yp) - img.at(x, ym));
        }
    }
}

}  // namespace

Image accumulate_intensity(const EventStream& ev, double threshold, double t0, double t1) {
    if (!(threshold > 0.0)) throw InputError("accumulate_intensity: threshold must be > 0");
    ev.validate();
    std::vector<std::int64_t> counts(static_cast<std::size_t>(ev.width) * static_cast<std::size_t>(ev.height), 0);
    for (const Event& e : ev.events) {
        if (e.t < t0 || e.t > t1) continue;
        counts[static_cast<std::size_t>(e.y) * ev.width + e.x] += e.p;
    }
    Image out = Image::make(ev.width, ev.height, 1, Semantics::Intensity);
    for (std::size_t i = 0; i < counts.size(); ++i) out.data[i] = static_cast<double>(counts[i]) * threshold;
    return out;
}

FusedLuma fuse_luminance(const Image& luma, const Image& intensity, const FusionWeights& w) {
    check_shapes(luma, intensity, "fuse_luminance");
    if (luma.channels != 1) throw InputError("fuse_luminance: expected single-channel planes");
    if (w.event_weight < 0.0 || w.rgb_weight < 0.0)
        throw InputError("fuse_luminance: weights must be non-negative");
    const double s = w.rgb_weight + w.event_weight;
    if (!(s > 0.0)) throw InputError("fuse_luminance: degenerate weights (sum is zero)");
    const double a = w.rgb_weight / s;
    const double b = w.event_weight / s;

    FusedLuma out;
    out.image = Image::make(luma.width, luma.height, 1, Semantics::Luma);
    for (std::size_t i = 0; i < luma.data.size(); ++i) {
        const double v = a * luma.data[i] + b * intensity.data[i];
        if (v < 0.0 || v > 1.0) ++out.clamp_count;
        out.image.data[i] = std::clamp(v, 0.0, 1.0);
    }
    return out;
}

Image recombine_color(const Image& fused_luma, const Image& u, const Image& v) {
    return yuv_to_rgb(fused_luma, u, v);
}

AdversarialLoss adversarial_loss(const std::vector<double>& scores_t, const std::vector<double>& scores_t2) {
    const std::size_t count = scores_t.size() + scores_t2.size();
    if (count == 0) throw InputError("adversarial_loss: no scores supplied");
    auto check = [](const std::vector<double>& scores) {
        for (double d : scores)
            if (!(d > 0.0 && d < 1.0)) throw InputError("adversarial_loss: score outside (0,1)");
    };
    check(scores_t);
    check(scores_t2);

    AdversarialLoss out;
    std::vector<double> terms;
    terms.reserve(count);
    auto add = [&](const std::vector<double>& scores, std::vector<double>& grad) {
        grad.resize(scores.size());
        for (std::size_t i = 0; i < scores.size(); ++i) {
            terms.push_back(std::log(1.0 - scores[i]));
            grad[i] = -1.0 / ((1.0 - scores[i]) * static_cast<double>(count));
        }
    };
    add(scores_t, out.grad_scores_t);
    add(scores_t2, out.grad_scores_t2);
    out.value = pairwise_sum(terms) / static_cast<double>(count);
    return out;
}

ResidualMap spatiotemporal_residual(const Image& luma, const Image& event_frame, const FlowField2D& flow) {
    check_shapes(luma, event_frame, "spatiotemporal_residual");
    if (luma.width != flow.width || luma.height != flow.height)
        throw InputError("spatiotemporal_residual: flow shape differs");
    Image gx, gy;
    image_gradient(luma, gx, gy);

    ResidualMap out;
    out.residual = Image::make(luma.width, luma.height, 1, Semantics::Intensity);
    out.in_bounds.assign(luma.pixel_count(), 1);
    for (int y = 0; y < luma.height; ++y) {
        for (int x = 0; x < luma.width; ++x) {
            const std::size_t i = flow.index(x, y);
            const double du = flow.du[i], dv = flow.dv[i];
            const BilinearSample warp = bilinear_sample(event_frame, x + du, y + dv);
            if (!warp.in_bounds) out.in_bounds[i] = 0;
            out.residual.at(x, y) = warp.value + gx.at(x, y) * du + gy.at(x, y) * dv;
        }
    }
    return out;
}

ConsistencyLoss consistency_loss(const Image& luma, const Image& event_frame, const FlowField2D& flow,
                                 const Image& mask) {
    check_shapes(luma, mask, "consistency_loss");
    check_shapes(luma, event_frame, "consistency_loss");
    if (luma.width != flow.width || luma.height != flow.height)
        throw InputError("consistency_loss: flow shape differs");

    double mask_sum = 0.0;
    for (double m : mask.data) mask_sum += m;
    if (!(mask_sum > 0.0)) throw InputError("consistency_loss: empty mask");

    Image gx, gy;
    image_gradient(luma, gx, gy);

    ConsistencyLoss out;
    const std::size_t n = luma.pixel_count();
    out.grad_du.assign(n, 0.0);
    out.grad_dv.assign(n, 0.0);
    std::vector<double> terms;
    terms.reserve(n);
    for (int y = 0; y < luma.height; ++y) {
        for (int x = 0; x < luma.width; ++x) {
            const std::size_t i = flow.index(x, y);
            const double m = mask.at(x, y);
            if (m == 0.0) continue;
            const double du = flow.du[i], dv = flow.dv[i];
            const BilinearSample warp = bilinear_sample(event_frame, x + du, y + dv);
            const double r = warp.value + gx.at(x, y) * du + gy.at(x, y) * dv;
            terms.push_back(m * std::abs(r));
            const double sgn = r > 0.0 ? 1.0 : (r < 0.0 ? -1.0 : 0.0);
            out.grad_du[i] = m * sgn * (warp.dx + gx.at(x, y)) / mask_sum;
            out.grad_dv[i] = m * sgn * (warp.dy + gy.at(x, y)) / mask_sum;
        }
    }
    out.value = pairwise_sum(terms) / mask_sum;
    return out;
}

Image valid_mask(const FlowField2D& flow, const EventStream& ev) {
    if (flow.width != ev.width || flow.height != ev.height)
        throw InputError("valid_mask: flow and stream shapes differ");
    Image active = Image::make(ev.width, ev.height, 1, Semantics::Luma);
    for (const Event& e : ev.events) active.at(e.x, e.y) = 1.0;

    Image mask = Image::make(ev.width, ev.height, 1, Semantics::Luma);
    for (int y = 0; y < flow.height; ++y) {
        for (int x = 0; x < flow.width; ++x) {
            const std::size_t i = flow.index(x, y);
            const double px = x + flow.du[i], py = y + flow.dv[i];
            const bool in = px >= 0.0 && px <= static_cast<double>(flow.width - 1) && py >= 0.0 &&
                            py <= static_cast<double>(flow.height - 1);
            mask.at(x, y) = (in && active.at(x, y) > 0.0) ? 1.0 : 0.0;
        }
    }
    return mask;
}

}  // namespace vmf
