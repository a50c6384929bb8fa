// Acceptance suite: one pass/fail line per criterion, nonzero exit on any
// failure. Every tolerance is pinned here, not configurable.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fcntl.h>
#include <unistd.h>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "vmf/cli.hpp"
#include "vmf/config.hpp"
#include "vmf/correlation.hpp"
#include "vmf/events.hpp"
#include "vmf/geometry.hpp"
#include "vmf/gradcheck.hpp"
#include "vmf/io.hpp"
#include "vmf/luminance.hpp"
#include "vmf/pipeline.hpp"
#include "vmf/structure.hpp"
#include "vmf/synthetic.hpp"

using namespace vmf;

namespace {

int g_failures = 0;

void report(int criterion, const char* name, bool passed, const std::string& detail) {
    std::printf("[%s] criterion %d: %s (%s)\n", passed ? "PASS" : "FAIL", criterion, name, detail.c_str());
    std::fflush(stdout);
    if (!passed) ++g_failures;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// ---------------------------------------------------------------------------
// 1. Gradient audit: analytic vs central differences for all five losses.
void criterion_gradients() {
    const double t0 = now_seconds();
    bool ok = true;
    double worst = 0.0;
    std::string failed;
    for (const GradCheckResult& r : run_gradcheck(20)) {
        worst = std::max(worst, r.max_rel_err);
        if (!r.passed) {
            ok = false;
            failed += r.loss_name + " ";
        }
    }
    const double elapsed = now_seconds() - t0;
    ok = ok && elapsed < 120.0;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "max rel err %.3g, %.1f s%s%s", worst, elapsed,
                  failed.empty() ? "" : ", failing: ", failed.c_str());
    report(1, "gradient audit (adv, consis, pse, kl, pho)", ok, buf);
}

// ---------------------------------------------------------------------------
// 2. Voxelization exactness and event quantization bound.
void criterion_voxelization() {
    bool ok = true;
    std::string detail = "slice sums bit-exact";

    // Bit-exact slice sums on random streams.
    Rng rng(202);
    for (int trial = 0; trial < 5 && ok; ++trial) {
        EventStream ev;
        ev.width = 48;
        ev.height = 48;
        ev.t_begin = 0.0;
        ev.t_end = 0.3;
        std::vector<double> times;
        for (int i = 0; i < 30000; ++i) times.push_back(rng.uniform(0.0, 0.3));
        std::sort(times.begin(), times.end());
        for (double t : times)
            ev.events.push_back({t, static_cast<int>(rng.uniform_index(48)),
                                 static_cast<int>(rng.uniform_index(48)), rng.uniform() < 0.5 ? -1 : 1});
        const double threshold = 0.013 * (trial + 1);
        const EventVoxelGrid grid = voxelize_events(ev, 10, threshold);
        const Image full = accumulate_intensity(ev, threshold);
        const Image summed = grid.accumulated_frame();
        for (std::size_t i = 0; i < full.data.size(); ++i)
            if (summed.data[i] != full.data[i]) {
                ok = false;
                detail = "slice sum mismatch";
                break;
            }
    }

    // |reconstruction - true luma change| <= C on every pixel, 10 scenes.
    for (int seed = 1; seed <= 10 && ok; ++seed) {
        GeneratorConfig cfg;
        cfg.quad_enabled = (seed % 2 == 0);
        cfg.translate_x = 0.03125 * (1 + seed % 3);
        const double threshold = 0.04;
        const SyntheticScene scene = generate_synthetic(cfg, threshold, static_cast<std::uint64_t>(seed));
        const Image acc = accumulate_intensity(scene.events, threshold);
        for (int y = 0; y < scene.K.height && ok; ++y)
            for (int x = 0; x < scene.K.width; ++x) {
                const double delta = scene.clean_luma_t2.at(x, y) - scene.clean_luma_t.at(x, y);
                if (std::abs(acc.at(x, y) - delta) > threshold + 1e-12) {
                    ok = false;
                    detail = "reconstruction bound violated";
                    break;
                }
            }
    }
    report(2, "voxel slice-sum exactness and event quantization bound", ok, detail);
}

// ---------------------------------------------------------------------------
// 3. Clustering: monotone objective on 50 random instances; exhaustive
//    two-means agreement on two-blob instances.
void criterion_clustering() {
    bool ok = true;
    std::string detail = "objective monotone, two-blob oracle matched";
    Rng rng(303);
    const DistanceParams params{16.0};

    for (int instance = 0; instance < 50 && ok; ++instance) {
        Event2DPoints events;
        ProjectedPoints lidar;
        const int ne = 30 + static_cast<int>(rng.uniform_index(100));
        for (int i = 0; i < ne; ++i)
            events.entries.push_back({rng.uniform(0, 64), rng.uniform(0, 64), rng.uniform() < 0.5 ? -1 : 1});
        const int nl = 10 + static_cast<int>(rng.uniform_index(50));
        for (int i = 0; i < nl; ++i)
            lidar.entries.push_back({rng.uniform(1, 63), rng.uniform(1, 63), rng.uniform(1.0, 8.0), i});
        const ClusterMap map =
            cluster_neighbors(events, lidar, 64, 64, 2 + static_cast<int>(rng.uniform_index(14)), 10, params);
        for (std::size_t i = 1; i < map.objective_history.size(); ++i)
            if (map.objective_history[i] > map.objective_history[i - 1] + 1e-12) {
                ok = false;
                detail = "objective increased";
            }
    }

    for (int trial = 0; trial < 10 && ok; ++trial) {
        Event2DPoints events;
        ProjectedPoints lidar;
        struct P {
            double u, v, f;
        };
        std::vector<P> joint;
        auto blob = [&](double cu, double cv, int n_ev, int n_li) {
            for (int i = 0; i < n_ev; ++i) {
                const double u = cu + rng.uniform(-3, 3), v = cv + rng.uniform(-3, 3);
                events.entries.push_back({u, v, 1});
                joint.push_back({u, v, 1.0});
            }
            for (int i = 0; i < n_li; ++i) {
                const double u = cu + rng.uniform(-3, 3), v = cv + rng.uniform(-3, 3);
                lidar.entries.push_back({u, v, 5.0, static_cast<int>(lidar.entries.size())});
            }
        };
        blob(14, 30, 4, 2);
        blob(50, 34, 4, 2);
        for (const auto& l : lidar.entries) joint.push_back({l.u, l.v, 1.0});

        // Exhaustive oracle over all 2-partitions.
        const int n = static_cast<int>(joint.size());
        double best = 1e300;
        std::vector<int> oracle(static_cast<std::size_t>(n), 0);
        for (unsigned mask = 0; mask < (1u << n); ++mask) {
            double su[2] = {0, 0}, sv[2] = {0, 0};
            int cnt[2] = {0, 0};
            for (int i = 0; i < n; ++i) {
                const int c = (mask >> i) & 1;
                su[c] += joint[static_cast<std::size_t>(i)].u;
                sv[c] += joint[static_cast<std::size_t>(i)].v;
                ++cnt[c];
            }
            if (cnt[0] == 0 || cnt[1] == 0) continue;
            double obj = 0.0;
            for (int i = 0; i < n; ++i) {
                const int c = (mask >> i) & 1;
                const double du = (joint[static_cast<std::size_t>(i)].u - su[c] / cnt[c]) / params.spatial_norm;
                const double dv = (joint[static_cast<std::size_t>(i)].v - sv[c] / cnt[c]) / params.spatial_norm;
                obj += du * du + dv * dv;  // features are uniform by construction
            }
            if (obj < best) {
                best = obj;
                for (int i = 0; i < n; ++i) oracle[static_cast<std::size_t>(i)] = (mask >> i) & 1;
            }
        }

        const ClusterMap map = cluster_neighbors(events, lidar, 64, 64, 2, 20, params);
        std::vector<int> got;
        for (int a : map.event_assignment) got.push_back(a);
        for (int a : map.lidar_assignment) got.push_back(a);
        bool same = true, swapped = true;
        for (std::size_t i = 0; i < got.size(); ++i) {
            if (got[i] != oracle[i]) same = false;
            if (got[i] != 1 - oracle[i]) swapped = false;
        }
        if (!same && !swapped) {
            ok = false;
            detail = "two-blob partition differs from the exhaustive oracle";
        }
    }
    report(3, "clustering soundness", ok, detail);
}

// ---------------------------------------------------------------------------
// 4. KL oracle equivalence, nonnegativity and the zero case.
void criterion_kl() {
    bool ok = true;
    std::string detail = "matches scalar oracle to 1e-10";
    Rng rng(404);

    auto make_volume = [](Axis a, Modality m, const std::vector<double>& row, int slice = -1) {
        CorrelationVolume cv = CorrelationVolume::make(a, m, static_cast<int>(row.size() / 2), 1, slice);
        for (std::size_t b = 0; b < row.size(); ++b) cv.at(0, static_cast<int>(b)) = row[b];
        return cv;
    };
    auto scalar_kl = [](const std::vector<double>& ps, const std::vector<double>& qs) {
        auto soft = [](const std::vector<double>& s) {
            double mx = s[0];
            for (double v : s) mx = std::max(mx, v);
            double z = 0.0;
            for (double v : s) z += std::exp(v - mx);
            std::vector<double> p;
            for (double v : s) p.push_back(std::exp(v - mx) / z);
            return p;
        };
        const auto p = soft(ps), q = soft(qs);
        double kl = 0.0;
        for (std::size_t i = 0; i < p.size(); ++i) kl += p[i] * std::log(p[i] / q[i]);
        return kl;
    };

    for (int trial = 0; trial < 200 && ok; ++trial) {
        const int bins = 3 + 2 * static_cast<int>(rng.uniform_index(4));  // 3..9
        std::vector<double> lx(static_cast<std::size_t>(bins)), rx(static_cast<std::size_t>(bins)),
            ex(static_cast<std::size_t>(bins));
        for (double& v : lx) v = rng.normal();
        for (double& v : rx) v = rng.normal();
        for (double& v : ex) v = rng.normal();
        const Correlation3D lidar{make_volume(Axis::X, Modality::Lidar, lx),
                                  make_volume(Axis::Y, Modality::Lidar, lx),
                                  make_volume(Axis::Z, Modality::Lidar, lx)};
        const Correlation2D rgb{make_volume(Axis::X, Modality::Rgb, rx), make_volume(Axis::Y, Modality::Rgb, lx)};
        const std::vector<Correlation2D> events = {
            {make_volume(Axis::X, Modality::Event, ex, 0), make_volume(Axis::Y, Modality::Event, lx, 0)}};
        const double got = kl_alignment_loss(lidar, rgb, events).value;
        // Only the x-axis rgb and event terms are nonzero by construction.
        const double expect = scalar_kl(lx, rx) + scalar_kl(lx, ex);
        if (std::abs(got - expect) > 1e-10) {
            ok = false;
            detail = "oracle mismatch";
        }
        if (got < 0.0) {
            ok = false;
            detail = "negative KL";
        }
    }

    // Zero iff matched.
    std::vector<double> p = {0.4, -1.2, 0.7};
    const Correlation3D lidar{make_volume(Axis::X, Modality::Lidar, p), make_volume(Axis::Y, Modality::Lidar, p),
                              make_volume(Axis::Z, Modality::Lidar, p)};
    const Correlation2D rgb{make_volume(Axis::X, Modality::Rgb, p), make_volume(Axis::Y, Modality::Rgb, p)};
    const std::vector<Correlation2D> events = {
        {make_volume(Axis::X, Modality::Event, p, 0), make_volume(Axis::Y, Modality::Event, p, 0)}};
    if (std::abs(kl_alignment_loss(lidar, rgb, events).value) > 1e-12) {
        ok = false;
        detail = "nonzero loss on matched distributions";
    }
    std::vector<double> q = p;
    q[0] += 0.5;
    const Correlation2D rgb2{make_volume(Axis::X, Modality::Rgb, q), make_volume(Axis::Y, Modality::Rgb, p)};
    if (kl_alignment_loss(lidar, rgb2, events).value <= 0.0) {
        ok = false;
        detail = "zero loss on mismatched distributions";
    }
    report(4, "KL oracle equivalence", ok, detail);
}

// ---------------------------------------------------------------------------
// 5. Structure fusion on the beam-sparse plane scene.
void criterion_structure() {
    GeneratorConfig gen;
    gen.quad_enabled = false;
    const double threshold = 0.04;
    const SyntheticScene scene = generate_synthetic(gen, threshold, 7);
    const DistanceParams params{32.0};
    const Event2DPoints pts = normalize_event_coords(scene.events);
    const ProjectedPoints proj = project_points(scene.cloud_t, scene.K);
    const ClusterMap clusters = cluster_neighbors(pts, proj, scene.K.width, scene.K.height, 64, 10, params);
    const Image fused = fuse_depth(proj, pts, clusters, 5, scene.K, params);

    // Coverage of the event-active region before/after fusion.
    Image active = Image::make(scene.K.width, scene.K.height, 1, Semantics::Luma);
    for (const Event& e : scene.events.events) active.at(e.x, e.y) = 1.0;
    Image lidar_only = Image::make(scene.K.width, scene.K.height, 1, Semantics::Depth);
    for (const auto& e : proj.entries) {
        double& cell = lidar_only.at(splat_x(e.u, scene.K.width), splat_y(e.v, scene.K.height));
        if (cell == 0.0 || e.d < cell) cell = e.d;
    }
    std::size_t act = 0, before = 0, after = 0;
    for (int y = 0; y < scene.K.height; ++y)
        for (int x = 0; x < scene.K.width; ++x) {
            if (active.at(x, y) == 0.0) continue;
            ++act;
            if (lidar_only.at(x, y) > 0.0) ++before;
            if (fused.at(x, y) > 0.0) ++after;
        }
    const double ratio = before == 0 ? 1e9 : static_cast<double>(after) / before;
    bool ok = ratio >= 2.0;

    // Filled depths within 5% of ground truth.
    double worst_rel = 0.0;
    for (int y = 0; y < scene.K.height; ++y)
        for (int x = 0; x < scene.K.width; ++x) {
            if (!(fused.at(x, y) > 0.0)) continue;
            worst_rel = std::max(worst_rel,
                                 std::abs(fused.at(x, y) - scene.gt_depth_t.at(x, y)) / scene.gt_depth_t.at(x, y));
        }
    ok = ok && worst_rel <= 0.05;

    // Convexity against a full selection oracle: every fused write must
    // equal an inverse-distance blend inside [min, max] of its k sources.
    const double dmax = max_depth(proj);
    bool convex = true;
    for (std::size_t ei = 0; ei < pts.size() && convex; ++ei) {
        const auto& e = pts.entries[ei];
        std::vector<std::pair<double, int>> cands;
        for (std::size_t li = 0; li < proj.entries.size(); ++li) {
            if (clusters.lidar_assignment[li] != clusters.event_assignment[ei]) continue;
            const auto& l = proj.entries[li];
            cands.push_back(
                {joint_distance(e.u, e.v, e.p, l.u, l.v, l.d / dmax, params), static_cast<int>(li)});
        }
        if (cands.empty()) continue;
        std::stable_sort(cands.begin(), cands.end());
        const std::size_t take = std::min<std::size_t>(5, cands.size());
        double wsum = 0, dsum = 0, lo = 1e300, hi = 0;
        for (std::size_t j = 0; j < take; ++j) {
            const double d = proj.entries[static_cast<std::size_t>(cands[j].second)].d;
            const double w = 1.0 / (cands[j].first + 1e-6);
            wsum += w;
            dsum += w * d;
            lo = std::min(lo, d);
            hi = std::max(hi, d);
        }
        const double blended = dsum / wsum;
        if (blended < lo - 1e-9 || blended > hi + 1e-9) convex = false;
    }
    ok = ok && convex;

    char buf[160];
    std::snprintf(buf, sizeof(buf), "coverage x%.2f, worst rel err %.4f, convex %s", ratio, worst_rel,
                  convex ? "yes" : "no");
    report(5, "structure-fusion quality on the beam-sparse scene", ok, buf);
}

// ---------------------------------------------------------------------------
// 6. End-to-end motion on the on-grid rigid-translation scene.
void criterion_end_to_end() {
    const double t0 = now_seconds();
    PipelineConfig cfg;
    cfg.gen.quad_enabled = false;  // single-depth: the 2 px displacement sits on the grid
    const PipelineResult result = run_pipeline(cfg);
    const double elapsed = now_seconds() - t0;
    const bool ok =
        result.report.has_gt && result.report.epe_2d < 0.5 && result.report.acc_2d > 90.0 && elapsed < 60.0;
    char buf[120];
    std::snprintf(buf, sizeof(buf), "EPE %.3f px, ACC %.1f%%, %.1f s", result.report.epe_2d, result.report.acc_2d,
                  elapsed);
    report(6, "end-to-end fused flow on the 128x128 translation scene", ok, buf);
}

// ---------------------------------------------------------------------------
// 7. Ablation direction on occluded low-light scenes.
void criterion_ablation() {
    bool ok = true;
    double mean_full = 0.0, mean_motion = 0.0, mean_none = 0.0;
    for (int seed = 1; seed <= 10; ++seed) {
        PipelineConfig cfg;
        cfg.seed = static_cast<std::uint64_t>(seed);
        cfg.gen.low_light = true;
        cfg.gen.low_light_gain = 0.15;
        cfg.gen.noise_sigma = 0.035;

        const double full = run_pipeline(cfg).report.epe_2d;
        PipelineConfig motion_only = cfg;
        motion_only.enable_luminance = false;
        motion_only.enable_structure = false;
        const double motion = run_pipeline(motion_only).report.epe_2d;
        PipelineConfig no_fusion = motion_only;
        no_fusion.enable_motion_fusion = false;
        const double none = run_pipeline(no_fusion).report.epe_2d;

        mean_full += full;
        mean_motion += motion;
        mean_none += none;
        if (!(full <= motion && motion <= none)) ok = false;
    }
    mean_full /= 10.0;
    mean_motion /= 10.0;
    mean_none /= 10.0;
    ok = ok && mean_full < mean_motion && mean_full < mean_none;
    char buf[160];
    std::snprintf(buf, sizeof(buf), "mean EPE: full %.3f <= motion %.3f <= none %.3f over 10 seeds", mean_full,
                  mean_motion, mean_none);
    report(7, "ablation ordering on occluded low-light scenes", ok, buf);
}

// ---------------------------------------------------------------------------
// 8. Determinism, binary format exactness, malformed-input rejection.
void criterion_determinism_formats() {
    bool ok = true;
    std::string detail = "reports bit-identical, formats exact, fuzz rejected";

    PipelineConfig cfg;
    cfg.gen.width = 64;
    cfg.gen.height = 64;
    cfg.gen.focal = 64.0;
    cfg.sample_count = 200;
    cfg.cluster_count = 16;
    const PipelineResult a = run_pipeline(cfg);
    const PipelineResult b = run_pipeline(cfg);
    if (report_text(a.report) != report_text(b.report) || report_json(a.report) != report_json(b.report)) {
        ok = false;
        detail = "reports differ across identical runs";
    }
    if (a.flow2d.du != b.flow2d.du || a.flow2d.dv != b.flow2d.dv || a.flow2d.valid != b.flow2d.valid) {
        ok = false;
        detail = "flow differs across identical runs";
    }

    // Binary flow round trip, bit-exact including a second save.
    const std::string dir =
        (std::filesystem::temp_directory_path() / "vmf_acceptance").string();
    std::filesystem::create_directories(dir);
    const std::string f1 = dir + "/flow_a.vmfl", f2 = dir + "/flow_b.vmfl";
    save_flow(a.flow2d, f1);
    save_flow(load_flow(f1), f2);
    auto slurp = [](const std::string& p) {
        std::ifstream f(p, std::ios::binary);
        return std::string(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());
    };
    if (slurp(f1) != slurp(f2) || slurp(f1).empty()) {
        ok = false;
        detail = "flow round trip not bit-exact";
    }

    // Fuzzed inputs must be rejected with exit code 1 through the CLI, and
    // loaders must throw InputError rather than crash. The CLI's own error
    // reporting is routed to /dev/null for the duration of the loop.
    save_flow(a.flow2d, f1);
    const std::string original = slurp(f1);
    Rng rng(808);
    const std::string mutated = dir + "/mutated.vmfl";
    int rejected = 0, accepted = 0;
    std::fflush(stdout);
    std::fflush(stderr);
    const int saved_out = dup(1), saved_err = dup(2);
    const int devnull = open("/dev/null", O_WRONLY);
    dup2(devnull, 1);
    dup2(devnull, 2);
    for (int trial = 0; trial < 100; ++trial) {
        std::string bytes = original;
        const int edits = 1 + static_cast<int>(rng.uniform_index(3));
        for (int e = 0; e < edits; ++e) {
            const std::size_t pos = rng.uniform_index(bytes.size());
            if (rng.uniform() < 0.5) bytes[pos] = static_cast<char>(rng.uniform_index(256));
            else bytes.erase(pos, 1);
        }
        {
            std::ofstream f(mutated, std::ios::binary);
            f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        }
        const char* argv[] = {"vmf", "metrics", "--pred", mutated.c_str(), "--gt", f1.c_str()};
        const int code = run_cli(6, argv);
        if (code == 0) ++accepted;  // the mutation happened to stay valid
        else if (code == 1) ++rejected;
        else {
            ok = false;
            detail = "fuzzed input produced exit code " + std::to_string(code);
        }
    }
    std::fflush(stdout);
    std::fflush(stderr);
    dup2(saved_out, 1);
    dup2(saved_err, 2);
    close(saved_out);
    close(saved_err);
    close(devnull);
    if (rejected == 0) {
        ok = false;
        detail = "fuzzing never produced a rejection";
    }

    char buf[160];
    std::snprintf(buf, sizeof(buf), "%s; fuzz: %d rejected, %d harmless", detail.c_str(), rejected, accepted);
    report(8, "determinism and formats", ok, buf);
}

}  // namespace

int main() {
    criterion_gradients();
    criterion_voxelization();
    criterion_clustering();
    criterion_kl();
    criterion_structure();
    criterion_end_to_end();
    criterion_ablation();
    criterion_determinism_formats();
    if (g_failures > 0) {
        std::printf("%d criterion(s) FAILED\n", g_failures);
        return 1;
    }
    std::printf("all acceptance criteria passed\n");
    return 0;
}
