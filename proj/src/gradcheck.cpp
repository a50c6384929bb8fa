#include "vmf/gradcheck.hpp"

#include <cmath>
#include <functional>

#include "vmf/correlation.hpp"
#include "vmf/geometry.hpp"
#include "vmf/luminance.hpp"
#include "vmf/structure.hpp"

namespace vmf {

namespace {

constexpr double kStep = 1e-5;
constexpr double kRelTol = 1e-4;
constexpr double kZeroFloor = 1e-7;

struct Accumulator {
    GradCheckResult* r;

    void compare(double analytic, double fd) {
        const double denom = std::max(std::abs(analytic), std::abs(fd));
        if (denom < kZeroFloor) {
            ++r->checked;
            return;
        }
        const double rel = std::abs(analytic - fd) / denom;
        r->max_rel_err = std::max(r->max_rel_err, rel);
        ++r->checked;
    }

    void exclude() { ++r->excluded; }
};

double central_diff(const std::function<double()>& eval, double& slot) {
    const double saved = slot;
    slot = saved + kStep;
    const double hi = eval();
    slot = saved - kStep;
    const double lo = eval();
    slot = saved;
    return (hi - lo) / (2.0 * kStep);
}

// Smooth random plane in [0,1]: a few seeded sinusoids.
Image random_smooth_image(Rng& rng, int w, int h, Semantics sem, double amplitude) {
    Image img = Image::make(w, h, 1, sem);
    struct Wave {
        double fx, fy, ph, amp;
    };
    std::vector<Wave> waves;
    for (int k = 0; k < 6; ++k)
        waves.push_back({rng.uniform(-0.25, 0.25), rng.uniform(-0.25, 0.25), rng.uniform(0.0, 2.0 * M_PI),
                         rng.uniform(0.5, 1.0)});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double s = 0.0, norm = 0.0;
            for (const Wave& wv : waves) {
                s += wv.amp * std::sin(2.0 * M_PI * (wv.fx * x + wv.fy * y) + wv.ph);
                norm += wv.amp;
            }
            img.at(x, y) = 0.5 + amplitude * s / norm;
        }
    return img;
}

// Flow whose fractional parts stay away from the bilinear cell boundaries.
FlowField2D random_safe_flow(Rng& rng, int w, int h, double magnitude) {
    FlowField2D flow = FlowField2D::make(w, h);
    for (std::size_t i = 0; i < flow.du.size(); ++i) {
        const double iu = std::floor(rng.uniform(-magnitude, magnitude));
        const double iv = std::floor(rng.uniform(-magnitude, magnitude));
        flow.du[i] = iu + rng.uniform(0.15, 0.85);
        flow.dv[i] = iv + rng.uniform(0.15, 0.85);
        flow.valid[i] = 1;
    }
    return flow;
}

bool near_lattice(double v) {
    const double f = v - std::floor(v);
    return f < 1e-3 || f > 1.0 - 1e-3;
}

void check_adversarial(Accumulator& acc, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> a(16), b(12);
    for (double& v : a) v = rng.uniform(0.05, 0.95);
    for (double& v : b) v = rng.uniform(0.05, 0.95);
    const AdversarialLoss loss = adversarial_loss(a, b);
    const auto eval = [&] { return adversarial_loss(a, b).value; };
    for (std::size_t i = 0; i < a.size(); ++i) acc.compare(loss.grad_scores_t[i], central_diff(eval, a[i]));
    for (std::size_t i = 0; i < b.size(); ++i) acc.compare(loss.grad_scores_t2[i], central_diff(eval, b[i]));
}

void check_consistency(Accumulator& acc, std::uint64_t seed) {
    Rng rng(seed);
    const int w = 16, h = 16;
    const Image luma = random_smooth_image(rng, w, h, Semantics::Luma, 0.4);
    const Image events = random_smooth_image(rng, w, h, Semantics::Intensity, 0.3);
    FlowField2D flow = random_safe_flow(rng, w, h, 2.0);
    Image mask = Image::make(w, h, 1, Semantics::Luma, 1.0);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        if (rng.uniform() < 0.2) mask.data[i] = 0.0;
    if (mask.data[0] == 0.0) mask.data[0] = 1.0;

    const ConsistencyLoss loss = consistency_loss(luma, events, flow, mask);
    const ResidualMap res = spatiotemporal_residual(luma, events, flow);
    const auto eval = [&] { return consistency_loss(luma, events, flow, mask).value; };
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            if (std::abs(res.residual.at(x, y)) < 1e-3 || near_lattice(x + flow.du[i]) ||
                near_lattice(y + flow.dv[i])) {
                acc.exclude();
                continue;
            }
            acc.compare(loss.grad_du[i], central_diff(eval, flow.du[i]));
            acc.compare(loss.grad_dv[i], central_diff(eval, flow.dv[i]));
        }
}

void check_pseudo_label(Accumulator& acc, std::uint64_t seed) {
    Rng rng(seed);
    const int w = 12, h = 12;
    auto make_pair = [&](Image& pred, Image& pse) {
        pred = Image::make(w, h, 1, Semantics::Depth);
        pse = Image::make(w, h, 1, Semantics::Depth);
        for (std::size_t i = 0; i < pse.data.size(); ++i) {
            if (rng.uniform() < 0.25) continue;  // missing label
            pse.data[i] = rng.uniform(0.5, 5.0);
            pred.data[i] = pse.data[i] + rng.uniform(-0.5, 0.5);
        }
        pse.data[0] = 1.0;
        pred.data[0] = 1.3;
    };
    Image pred_t, pse_t, pred_t2, pse_t2;
    make_pair(pred_t, pse_t);
    make_pair(pred_t2, pse_t2);

    const PseudoLabelLoss loss = pseudo_label_loss(pred_t, pse_t, pred_t2, pse_t2);
    const auto eval = [&] { return pseudo_label_loss(pred_t, pse_t, pred_t2, pse_t2).value; };
    auto walk = [&](Image& pred, const Image& pse, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < pred.data.size(); ++i) {
            if (!(pse.data[i] > 0.0)) continue;
            if (std::abs(pred.data[i] - pse.data[i]) < 1e-3) {
                acc.exclude();
                continue;
            }
            acc.compare(grad[i], central_diff(eval, pred.data[i]));
        }
    };
    walk(pred_t, pse_t, loss.grad_pred_t);
    walk(pred_t2, pse_t2, loss.grad_pred_t2);
}

void check_kl(Accumulator& acc, std::uint64_t seed) {
    Rng rng(seed);
    const int samples = 8, radius = 3, slices = 3;
    auto random_volume = [&](Axis axis, Modality m, int slice) {
        CorrelationVolume cv = CorrelationVolume::make(axis, m, radius, samples, slice);
        for (double& v : cv.scores) v = rng.uniform() < 0.1 ? kSentinel : rng.normal();
        // Keep bin 0 finite everywhere so every pairing has common support.
        for (int s = 0; s < samples; ++s)
            if (is_sentinel(cv.at(s, 0))) cv.at(s, 0) = rng.normal();
        return cv;
    };
    Correlation3D lidar{random_volume(Axis::X, Modality::Lidar, -1), random_volume(Axis::Y, Modality::Lidar, -1),
                        random_volume(Axis::Z, Modality::Lidar, -1)};
    Correlation2D rgb{random_volume(Axis::X, Modality::Rgb, -1), random_volume(Axis::Y, Modality::Rgb, -1)};
    std::vector<Correlation2D> events;
    for (int i = 0; i < slices; ++i)
        events.push_back({random_volume(Axis::X, Modality::Event, i), random_volume(Axis::Y, Modality::Event, i)});

    const KlAlignmentLoss loss = kl_alignment_loss(lidar, rgb, events);
    const auto eval = [&] { return kl_alignment_loss(lidar, rgb, events).value; };
    auto walk = [&](std::vector<double>& scores, const std::vector<double>& grad) {
        for (std::size_t i = 0; i < scores.size(); ++i) {
            if (is_sentinel(scores[i])) continue;  // zero gradient, zero fd
            acc.compare(grad[i], central_diff(eval, scores[i]));
        }
    };
    walk(lidar.x.scores, loss.grad_lidar_x);
    walk(lidar.y.scores, loss.grad_lidar_y);
    walk(rgb.x.scores, loss.grad_rgb_x);
    walk(rgb.y.scores, loss.grad_rgb_y);
    for (int i = 0; i < slices; ++i) {
        walk(events[static_cast<std::size_t>(i)].x.scores, loss.grad_event_x[static_cast<std::size_t>(i)]);
        walk(events[static_cast<std::size_t>(i)].y.scores, loss.grad_event_y[static_cast<std::size_t>(i)]);
    }
}

void check_photometric(Accumulator& acc, std::uint64_t seed) {
    Rng rng(seed);
    const int w = 12, h = 12;
    const Image frame_t = random_smooth_image(rng, w, h, Semantics::Luma, 0.4);
    const Image frame_t2 = random_smooth_image(rng, w, h, Semantics::Luma, 0.4);
    FlowField2D flow = random_safe_flow(rng, w, h, 1.0);
    const Image mask2d = Image::make(w, h, 1, Semantics::Luma, 1.0);

    PointCloud cloud_t2;
    for (int i = 0; i < 40; ++i)
        cloud_t2.points.push_back({rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0), rng.uniform(2.0, 6.0)});
    const int m = 10;
    std::vector<Vec3> positions(m);
    FlowField3D flow3d;
    flow3d.flow.assign(m, Vec3{});
    flow3d.valid.assign(m, 1);
    for (int i = 0; i < m; ++i) {
        positions[static_cast<std::size_t>(i)] = {rng.uniform(-2.0, 2.0), rng.uniform(-2.0, 2.0),
                                                  rng.uniform(2.0, 6.0)};
        flow3d.flow[static_cast<std::size_t>(i)] = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3),
                                                    rng.uniform(-0.3, 0.3)};
    }
    const std::vector<std::uint8_t> mask3d(m, 1);

    const PhotometricLoss loss =
        photometric_loss(frame_t, frame_t2, flow, mask2d, positions, cloud_t2, flow3d, mask3d);
    const auto eval = [&] {
        return photometric_loss(frame_t, frame_t2, flow, mask2d, positions, cloud_t2, flow3d, mask3d).value;
    };

    // 2D coordinates: skip small residuals and lattice crossings.
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const std::size_t i = flow.index(x, y);
            const double px = x + flow.du[i], py = y + flow.dv[i];
            if (!sample_in_bounds(frame_t2, px, py)) continue;
            const double residual = frame_t.at(x, y) - bilinear_sample(frame_t2, px, py).value;
            if (std::abs(residual) < 1e-2 || near_lattice(px) || near_lattice(py)) {
                acc.exclude();
                continue;
            }
            acc.compare(loss.grad_du[i], central_diff(eval, flow.du[i]));
            acc.compare(loss.grad_dv[i], central_diff(eval, flow.dv[i]));
        }

    // 3D coordinates: skip small residuals and association flips under the
    // probe step.
    std::vector<Vec3> warped(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i) warped[i] = positions[i] + flow3d.flow[i];
    auto nearest_index = [&](const Vec3& q) {
        int best = 0;
        double best_d = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < cloud_t2.points.size(); ++j) {
            const double d = (cloud_t2.points[j] - q).norm();
            if (d < best_d) {
                best_d = d;
                best = static_cast<int>(j);
            }
        }
        return best;
    };
    for (int i = 0; i < m; ++i) {
        const Vec3 q = warped[static_cast<std::size_t>(i)];
        const int nn = nearest_index(q);
        const Vec3 r = q - cloud_t2.points[static_cast<std::size_t>(nn)];
        double* comps[3] = {&flow3d.flow[static_cast<std::size_t>(i)].x, &flow3d.flow[static_cast<std::size_t>(i)].y,
                            &flow3d.flow[static_cast<std::size_t>(i)].z};
        const double res[3] = {r.x, r.y, r.z};
        const double grad[3] = {loss.grad_flow3d[static_cast<std::size_t>(i)].x,
                                loss.grad_flow3d[static_cast<std::size_t>(i)].y,
                                loss.grad_flow3d[static_cast<std::size_t>(i)].z};
        for (int c = 0; c < 3; ++c) {
            Vec3 probe_hi = q, probe_lo = q;
            (c == 0 ? probe_hi.x : c == 1 ? probe_hi.y : probe_hi.z) += kStep;
            (c == 0 ? probe_lo.x : c == 1 ? probe_lo.y : probe_lo.z) -= kStep;
            if (std::abs(res[c]) < 1e-2 || nearest_index(probe_hi) != nn || nearest_index(probe_lo) != nn) {
                acc.exclude();
                continue;
            }
            acc.compare(grad[c], central_diff(eval, *comps[c]));
        }
    }
}

}  // namespace

std::vector<GradCheckResult> run_gradcheck(int seeds, const std::string& only) {
    struct Entry {
        const char* name;
        void (*fn)(Accumulator&, std::uint64_t);
    };
    const Entry entries[] = {
        {"adv", check_adversarial}, {"consis", check_consistency}, {"pse", check_pseudo_label},
        {"kl", check_kl},           {"pho", check_photometric},
    };

    std::vector<GradCheckResult> results;
    for (const Entry& e : entries) {
        if (!only.empty() && only != e.name) continue;
        GradCheckResult r;
        r.loss_name = e.name;
        r.seeds = seeds;
        Accumulator acc{&r};
        for (int s = 0; s < seeds; ++s) e.fn(acc, 0x9e3779b9ULL * static_cast<std::uint64_t>(s + 1));
        r.passed = r.checked > 0 && r.max_rel_err < kRelTol;
        results.push_back(std::move(r));
    }
    if (results.empty()) throw InputError("gradcheck: unknown loss `" + only + "`");
    return results;
}

}  // namespace vmf
