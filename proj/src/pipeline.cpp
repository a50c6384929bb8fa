#include "vmf/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

#include <json.hpp>

#include "vmf/color.hpp"
#include "vmf/events.hpp"
#include "vmf/geometry.hpp"
#include "vmf/io.hpp"
#include "vmf/luminance.hpp"
#include "vmf/metrics.hpp"
#include "vmf/structure.hpp"

namespace vmf {

namespace {

// Rethrows stage failures with the stage name attached.
template <typename Fn>
auto stage(const char* name, Fn&& fn) {
    try {
        return fn();
    } catch (const InputError& e) {
        throw InputError(std::string("[") + name + "] " + e.what());
    } catch (const NumericError& e) {
        throw NumericError(std::string("[") + name + "] " + e.what());
    }
}

std::pair<std::vector<double>, std::vector<double>> load_score_lines(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError(path + ": cannot open scores file");
    auto parse_line = [&](std::vector<double>& out) {
        std::string line;
        if (!std::getline(f, line)) throw InputError(path + ": expected two score lines");
        std::istringstream is(line);
        double v;
        while (is >> v) out.push_back(v);
    };
    std::pair<std::vector<double>, std::vector<double>> scores;
    parse_line(scores.first);
    parse_line(scores.second);
    return scores;
}

Image with_semantics(const Image& img, Semantics s) {
    Image out = img;
    out.semantics = s;
    return out;
}

// Least-squares scale aligning the event accumulation with the observed
// inter-frame change of one image plane. Real frames may sit at a lower
// dynamic range than the events (low light); this calibration lets event
// reconstructions cancel the anchor frame content instead of ghosting.
double event_scale(const Image& plane_t, const Image& plane_t2, const Image& intensity, int channel = 0) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < intensity.data.size(); ++i) {
        num += (plane_t2.data[i * static_cast<std::size_t>(plane_t2.channels) + static_cast<std::size_t>(channel)] -
                plane_t.data[i * static_cast<std::size_t>(plane_t.channels) + static_cast<std::size_t>(channel)]) *
               intensity.data[i];
        den += intensity.data[i] * intensity.data[i];
    }
    return den > 0.0 ? num / den : 0.0;
}

// Per-slice event correlation volumes between two event-based luma
// reconstructions. The anchor rebuilds the near luma from the far frame
// minus the full event sum (near-anchored content, far-frame noise); lookup
// i rebuilds the far luma from the near frame plus the event sum with
// temporal slice i left out, rescaled by T / (T-1). The two sides hold
// independent sensor noise and each slice is a distinct temporal view with
// bounded quantization noise. Luma-plane reconstructions outperform
// per-color-plane ones here: events measure luma change only, and spreading
// it across color planes ghosts the other planes' content into each anchor.
// reverse = true builds the t2 -> t direction (negated slices).
std::vector<Correlation2D> event_slice_volumes(const Image& near_luma, const Image& far_luma,
                                               const EventVoxelGrid& grid, double scale, const SampleSet& samples,
                                               const FlowField2D& init_flow, int radius, bool reverse) {
    const int t = grid.slice_count;
    const double sign = reverse ? -1.0 : 1.0;

    Image full_sum = Image::make(near_luma.width, near_luma.height, 1, Semantics::Intensity);
    for (int i = 0; i < t; ++i)
        for (std::size_t j = 0; j < full_sum.data.size(); ++j)
            full_sum.data[j] += sign * grid.slices[static_cast<std::size_t>(i)].data[j];

    Image anchor = with_semantics(far_luma, Semantics::Intensity);
    for (std::size_t j = 0; j < anchor.data.size(); ++j) anchor.data[j] -= scale * full_sum.data[j];
    const FeatureMap anchor_features = encode_features(anchor);

    const double rescale = t > 1 ? static_cast<double>(t) / static_cast<double>(t - 1) : 1.0;
    std::vector<Correlation2D> volumes;
    for (int i = 0; i < t; ++i) {
        const Image& slice = grid.slices[static_cast<std::size_t>(i)];
        Image recon = with_semantics(near_luma, Semantics::Intensity);
        if (t > 1) {
            for (std::size_t j = 0; j < recon.data.size(); ++j)
                recon.data[j] += scale * rescale * (full_sum.data[j] - sign * slice.data[j]);
        } else {
            for (std::size_t j = 0; j < recon.data.size(); ++j) recon.data[j] += scale * full_sum.data[j];
        }
        volumes.push_back(
            build_correlation_2d(anchor_features, encode_features(recon), samples, init_flow, radius, i));
    }
    return volumes;
}

double median_depth_of(const PointCloud& pc, const SampleSet& samples) {
    std::vector<double> depths;
    depths.reserve(static_cast<std::size_t>(samples.size()));
    for (int idx : samples.indices) depths.push_back(pc.points[static_cast<std::size_t>(idx)].z);
    std::sort(depths.begin(), depths.end());
    return depths[depths.size() / 2];
}

std::vector<Vec3> gather_positions(const PointCloud& pc, const SampleSet& samples) {
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(samples.size()));
    for (int idx : samples.indices) out.push_back(pc.points[static_cast<std::size_t>(idx)]);
    return out;
}

FlowField2D scatter_flow(const SampleSet& samples, const std::vector<double>& du, const std::vector<double>& dv,
                         const std::vector<std::uint8_t>& valid, int width, int height) {
    FlowField2D flow = FlowField2D::make(width, height);
    for (int s = 0; s < samples.size(); ++s) {
        if (!valid[static_cast<std::size_t>(s)]) continue;
        const int x = splat_x(samples.u[static_cast<std::size_t>(s)], width);
        const int y = splat_y(samples.v[static_cast<std::size_t>(s)], height);
        const std::size_t i = flow.index(x, y);
        if (flow.valid[i]) continue;  // first sample wins; samples are in index order
        flow.du[i] = du[static_cast<std::size_t>(s)];
        flow.dv[i] = dv[static_cast<std::size_t>(s)];
        flow.valid[i] = 1;
    }
    return flow;
}

double coverage_in_region(const Image& depth, const Image& region) {
    std::size_t region_px = 0, covered = 0;
    for (std::size_t i = 0; i < region.data.size(); ++i) {
        if (region.data[i] == 0.0) continue;
        ++region_px;
        if (depth.data[i] > 0.0) ++covered;
    }
    return region_px == 0 ? 0.0 : static_cast<double>(covered) / static_cast<double>(region_px);
}

// One direction of the motion stage: correlation volumes, fusion, readout.
struct MotionOutput {
    SampleSet samples;
    FlowField3D flow3d;
    std::vector<double> du, dv;         // per-sample 2D flow
    std::vector<std::uint8_t> valid2d;
    double median_depth = 0.0;
    int base_dx = 0, base_dy = 0;
    int kl_skipped = 0;
    double loss_kl = 0.0;
    KlAlignmentLoss kl;
    FusedCorrelation fused;
    bool fused_present = false;
};

MotionOutput motion_readout(const PipelineConfig& cfg, const CameraIntrinsics& K, const Image& rgb_1,
                            const Image& rgb_2, const Image& luma_1, const Image& luma_2,
                            const EventVoxelGrid& grid, double ev_scale, bool reverse_events,
                            const PointCloud& cloud_1, const PointCloud& cloud_2, std::uint64_t sample_seed) {
    MotionOutput out;
    out.samples = sample_points(cloud_1, cfg.sample_count, K, sample_seed);
    const FlowField2D zero_flow = FlowField2D::make(K.width, K.height);

    const FeatureMap f1 = encode_features(rgb_1);
    const FeatureMap f2 = encode_features(rgb_2);
    // Coarse whole-frame alignment recenters every profile, so the axis
    // slices read residual displacement around it.
    const auto [base_dx, base_dy] = estimate_global_shift(f1, f2, cfg.corr_radius);
    out.base_dx = base_dx;
    out.base_dy = base_dy;
    FlowField2D init_flow = zero_flow;
    for (std::size_t i = 0; i < init_flow.du.size(); ++i) {
        init_flow.du[i] = base_dx;
        init_flow.dv[i] = base_dy;
        init_flow.valid[i] = 1;
    }
    const Correlation2D cv_rgb = build_correlation_2d(f1, f2, out.samples, init_flow, cfg.corr_radius);

    const std::vector<Correlation2D> cv_event = event_slice_volumes(luma_1, luma_2, grid, ev_scale, out.samples,
                                                                     init_flow, cfg.corr_radius, reverse_events);

    const FeatureSpec spec{cfg.density_radius, cfg.nn_max_dist};
    const FeatureMap fl1 = encode_features(cloud_1, spec);
    const FeatureMap fl2 = encode_features(cloud_2, spec);
    out.median_depth = median_depth_of(cloud_1, out.samples);
    const AxisOffsets offsets =
        matched_axis_offsets(cfg.corr_radius, K.f, out.median_depth, base_dx, base_dy);
    const Correlation3D cv_lidar = build_correlation_3d(fl1, fl2, out.samples, offsets, cfg.nn_max_dist);

    out.kl = kl_alignment_loss(cv_lidar, cv_rgb, cv_event);
    out.loss_kl = out.kl.value;
    out.kl_skipped = out.kl.skipped_terms;

    const std::size_t n = static_cast<std::size_t>(out.samples.size());
    if (cfg.enable_motion_fusion) {
        out.fused = fuse_correlation(cv_rgb, cv_event, cv_lidar);
        out.fused_present = true;
        out.flow3d = soft_argmax_flow(out.fused, offsets, cfg.soft_argmax_tau);
        // 2D flow by projecting each sampled point's displaced position.
        out.du.assign(n, 0.0);
        out.dv.assign(n, 0.0);
        out.valid2d.assign(n, 0);
        for (int s = 0; s < out.samples.size(); ++s) {
            if (!out.flow3d.valid[static_cast<std::size_t>(s)]) continue;
            const Vec3 p = cloud_1.points[static_cast<std::size_t>(out.samples.indices[static_cast<std::size_t>(s)])];
            const Vec3 q = p + out.flow3d.flow[static_cast<std::size_t>(s)];
            if (!(q.z > 0.0)) continue;
            out.du[static_cast<std::size_t>(s)] = K.f * q.x / q.z + K.cx - out.samples.u[static_cast<std::size_t>(s)];
            out.dv[static_cast<std::size_t>(s)] = K.f * q.y / q.z + K.cy - out.samples.v[static_cast<std::size_t>(s)];
            out.valid2d[static_cast<std::size_t>(s)] = 1;
        }
    } else {
        // Fusion disabled: implicit concatenation. All modality profiles are
        // stacked into one unaligned bin set and read with a single softmax,
        // so whichever modality has the largest raw scores dominates.
        std::vector<double> scores, off_x, off_y;
        out.du.assign(n, 0.0);
        out.dv.assign(n, 0.0);
        out.valid2d.assign(n, 0);
        out.flow3d.flow.assign(n, Vec3{});
        out.flow3d.valid.assign(n, 0);
        const int bins = cv_rgb.x.bins();
        std::vector<double> z_offsets(offsets.z);
        for (int s = 0; s < out.samples.size(); ++s) {
            const std::size_t si = static_cast<std::size_t>(s);
            const Vec3 p = cloud_1.points[static_cast<std::size_t>(out.samples.indices[si])];
            for (int axis = 0; axis < 2; ++axis) {
                scores.clear();
                std::vector<double>& off = axis == 0 ? off_x : off_y;
                off.clear();
                const int base = axis == 0 ? base_dx : base_dy;
                auto append = [&](const CorrelationVolume& cv, bool meters) {
                    for (int b = 0; b < bins; ++b) {
                        scores.push_back(cv.at(s, b));
                        if (meters) {
                            const std::vector<double>& mo = axis == 0 ? offsets.x : offsets.y;
                            off.push_back(K.f * mo[static_cast<std::size_t>(b)] / p.z);
                        } else {
                            off.push_back(static_cast<double>(base + b - cv.radius));
                        }
                    }
                };
                append(axis == 0 ? cv_rgb.x : cv_rgb.y, false);
                for (const Correlation2D& ev : cv_event) append(axis == 0 ? ev.x : ev.y, false);
                append(axis == 0 ? cv_lidar.x : cv_lidar.y, true);

                const std::vector<double> prob =
                    softmax_profile(scores.data(), static_cast<int>(scores.size()), cfg.soft_argmax_tau);
                double value = 0.0, mass = 0.0;
                for (std::size_t b = 0; b < prob.size(); ++b) {
                    value += prob[b] * off[b];
                    mass += prob[b];
                }
                if (mass == 0.0) {
                    out.valid2d[si] = 0;
                    break;
                }
                (axis == 0 ? out.du[si] : out.dv[si]) = value;
                out.valid2d[si] = 1;
            }
            if (!out.valid2d[si]) continue;
            double dz = 0.0;
            const std::vector<double> pz = softmax_profile(
                cv_lidar.z.scores.data() + si * static_cast<std::size_t>(bins), bins, cfg.soft_argmax_tau);
            double mz = 0.0;
            for (int b = 0; b < bins; ++b) {
                dz += pz[static_cast<std::size_t>(b)] * z_offsets[static_cast<std::size_t>(b)];
                mz += pz[static_cast<std::size_t>(b)];
            }
            out.flow3d.flow[si] = {out.du[si] * p.z / K.f, out.dv[si] * p.z / K.f, mz > 0.0 ? dz : 0.0};
            out.flow3d.valid[si] = 1;
        }
    }
    return out;
}

}  // namespace

FlowField2D densify_flow(const FlowField2D& sparse) {
    std::vector<int> xs, ys;
    for (int y = 0; y < sparse.height; ++y)
        for (int x = 0; x < sparse.width; ++x)
            if (sparse.valid[sparse.index(x, y)]) {
                xs.push_back(x);
                ys.push_back(y);
            }
    FlowField2D dense = FlowField2D::make(sparse.width, sparse.height);
    if (xs.empty()) return dense;
    for (int y = 0; y < sparse.height; ++y) {
        for (int x = 0; x < sparse.width; ++x) {
            // Nearest valid sample; ties resolve to the earliest sample.
            long best = std::numeric_limits<long>::max();
            std::size_t best_i = 0;
            for (std::size_t i = 0; i < xs.size(); ++i) {
                const long dx = xs[i] - x, dy = ys[i] - y;
                const long d = dx * dx + dy * dy;
                if (d < best) {
                    best = d;
                    best_i = i;
                }
            }
            const std::size_t src = sparse.index(xs[best_i], ys[best_i]);
            const std::size_t dst = dense.index(x, y);
            dense.du[dst] = sparse.du[src];
            dense.dv[dst] = sparse.dv[src];
            dense.valid[dst] = 1;
        }
    }
    return dense;
}

PipelineResult run_pipeline(const PipelineConfig& cfg) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();

    // Scene.
    SyntheticScene scene = stage("scene", [&] {
        return cfg.scene_dir.empty() ? generate_synthetic(cfg.gen, cfg.event_threshold, cfg.seed)
                                     : load_scene(cfg.scene_dir);
    });
    const CameraIntrinsics& K = scene.K;

    PipelineResult result;
    Report& rep = result.report;
    rep.luminance_on = cfg.enable_luminance;
    rep.structure_on = cfg.enable_structure;
    rep.motion_fusion_on = cfg.enable_motion_fusion;
    rep.event_count = static_cast<int>(scene.events.events.size());

    // --- Visual luminance fusion ---------------------------------------
    Image luma_t, luma_t2, rgb_t, rgb_t2;
    Image intensity = stage("luminance", [&] { return accumulate_intensity(scene.events, cfg.event_threshold); });
    stage("luminance", [&] {
        const YuvPlanes yuv_t = rgb_to_yuv(scene.frame_t);
        const YuvPlanes yuv_t2 = rgb_to_yuv(scene.frame_t2);
        const double ev_scale = event_scale(yuv_t.y, yuv_t2.y, intensity);
        if (cfg.enable_luminance) {
            const FusionWeights w{cfg.fuse_event_weight, cfg.fuse_rgb_weight};
            // Each frame blends with its event-reconstructed view at the same
            // instant, so the fused anchors stay temporally pure.
            Image recon_t = with_semantics(yuv_t2.y, Semantics::Intensity);
            Image recon_t2 = with_semantics(yuv_t.y, Semantics::Intensity);
            for (std::size_t i = 0; i < intensity.data.size(); ++i) {
                recon_t.data[i] -= ev_scale * intensity.data[i];
                recon_t2.data[i] += ev_scale * intensity.data[i];
            }
            FusedLuma fused_t = fuse_luminance(yuv_t.y, recon_t, w);
            FusedLuma fused_t2 = fuse_luminance(yuv_t2.y, recon_t2, w);
            rep.clamp_count_t = fused_t.clamp_count;
            rep.clamp_count_t2 = fused_t2.clamp_count;
            luma_t = std::move(fused_t.image);
            luma_t2 = std::move(fused_t2.image);
            rgb_t = recombine_color(luma_t, yuv_t.u, yuv_t.v);
            rgb_t2 = recombine_color(luma_t2, yuv_t2.u, yuv_t2.v);
        } else {
            luma_t = yuv_t.y;
            luma_t2 = yuv_t2.y;
            rgb_t = scene.frame_t;
            rgb_t2 = scene.frame_t2;
        }
        if (!cfg.adv_scores_path.empty()) {
            const auto scores = load_score_lines(cfg.adv_scores_path);
            rep.loss_adv = adversarial_loss(scores.first, scores.second).value;
            rep.adv_scores_supplied = true;
        }
        return 0;
    });

    // --- Visual structure fusion ----------------------------------------
    PointCloud cloud_t = scene.cloud_t;
    PointCloud cloud_t2 = scene.cloud_t2;
    Image pse_t, pse_t2;
    stage("structure", [&] {
        if (!cfg.enable_structure) return 0;
        const Event2DPoints pts = normalize_event_coords(scene.events);
        const ProjectedPoints proj_t = project_points(scene.cloud_t, K);
        const ProjectedPoints proj_t2 = project_points(scene.cloud_t2, K);
        const DistanceParams dist{cfg.spatial_norm};
        const ClusterMap clusters_t =
            cluster_neighbors(pts, proj_t, K.width, K.height, cfg.cluster_count, cfg.cluster_iters, dist, cfg.seed);
        const ClusterMap clusters_t2 =
            cluster_neighbors(pts, proj_t2, K.width, K.height, cfg.cluster_count, cfg.cluster_iters, dist, cfg.seed);
        rep.cluster_count = clusters_t.cluster_count;
        rep.cluster_objective = clusters_t.objective;

        pse_t = fuse_depth(proj_t, pts, clusters_t, cfg.knn_k, K, dist);
        pse_t2 = fuse_depth(proj_t2, pts, clusters_t2, cfg.knn_k, K, dist);

        // Coverage of the event-active region, before vs after fusion.
        Image active = Image::make(K.width, K.height, 1, Semantics::Luma);
        for (const Event& e : scene.events.events) active.at(e.x, e.y) = 1.0;
        Image lidar_only = Image::make(K.width, K.height, 1, Semantics::Depth);
        for (const auto& e : proj_t.entries) {
            double& cell = lidar_only.at(splat_x(e.u, K.width), splat_y(e.v, K.height));
            if (cell == 0.0 || e.d < cell) cell = e.d;
        }
        rep.coverage_before = coverage_in_region(lidar_only, active);
        rep.coverage_after = coverage_in_region(pse_t, active);

        cloud_t = backproject_depth(pse_t, K);
        cloud_t2 = backproject_depth(pse_t2, K);

        if (!cfg.pred_depth_t_path.empty() && !cfg.pred_depth_t2_path.empty()) {
            const Image pred_t = load_image(cfg.pred_depth_t_path);
            const Image pred_t2 = load_image(cfg.pred_depth_t2_path);
            rep.loss_pse = pseudo_label_loss(pred_t, pse_t, pred_t2, pse_t2).value;
            rep.pse_predictions_supplied = true;
        }

        if (cfg.dump_debug && !cfg.output_dir.empty()) {
            save_cluster_label_image(clusters_t, pts, proj_t, K.width, K.height,
                                     cfg.output_dir + "/clusters_t.pgm");
            save_densified(fill_boundary(proj_t, pts, clusters_t, cfg.knn_k, dist),
                           cfg.output_dir + "/densified_t.txt");
        }
        return 0;
    });
    result.fused_depth_t = pse_t;

    // --- Motion correlation fusion and readout --------------------------
    const EventVoxelGrid grid =
        stage("motion", [&] { return voxelize_events(scene.events, cfg.voxel_slices, cfg.event_threshold); });
    const double motion_ev_scale = event_scale(luma_t, luma_t2, intensity);
    MotionOutput fwd = stage("motion", [&] {
        return motion_readout(cfg, K, rgb_t, rgb_t2, luma_t, luma_t2, grid, motion_ev_scale, false, cloud_t,
                              cloud_t2, cfg.seed ^ 0x5a5a5a5aULL);
    });
    MotionOutput bwd = stage("motion", [&] {
        return motion_readout(cfg, K, rgb_t2, rgb_t, luma_t2, luma_t, grid, motion_ev_scale, true, cloud_t2,
                              cloud_t, cfg.seed ^ 0xb1b1b1b1ULL);
    });
    rep.loss_kl = fwd.loss_kl;
    rep.kl_skipped_terms = fwd.kl_skipped;
    rep.median_sample_depth = fwd.median_depth;
    rep.sample_total = fwd.samples.size();
    for (std::uint8_t v : fwd.valid2d) rep.valid_samples += v;

    result.samples = fwd.samples;
    result.flow3d = fwd.flow3d;
    result.flow2d = scatter_flow(fwd.samples, fwd.du, fwd.dv, fwd.valid2d, K.width, K.height);
    result.flow2d_dense = densify_flow(result.flow2d);
    const FlowField2D bwd_sparse = scatter_flow(bwd.samples, bwd.du, bwd.dv, bwd.valid2d, K.width, K.height);
    const FlowField2D bwd_dense = densify_flow(bwd_sparse);

    // --- Losses over the readout ----------------------------------------
    stage("losses", [&] {
        const Image occ2d = occlusion_mask_2d(result.flow2d_dense, bwd_dense, cfg.tau_occ);
        const std::vector<Vec3> positions_t = gather_positions(cloud_t, fwd.samples);
        const std::vector<Vec3> positions_t2 = gather_positions(cloud_t2, bwd.samples);
        const std::vector<std::uint8_t> occ3d =
            occlusion_mask_3d(positions_t, fwd.flow3d, positions_t2, bwd.flow3d, cfg.tau_occ);
        rep.loss_pho =
            photometric_loss(rgb_t, rgb_t2, result.flow2d_dense, occ2d, positions_t, cloud_t2, fwd.flow3d, occ3d)
                .value;

        const Image consis_mask = valid_mask(result.flow2d_dense, scene.events);
        double mask_sum = 0.0;
        for (double m : consis_mask.data) mask_sum += m;
        // An event-free scene has no valid consistency support; the loss is 0.
        rep.loss_consis =
            mask_sum > 0.0 ? consistency_loss(luma_t, intensity, result.flow2d_dense, consis_mask).value : 0.0;
        return 0;
    });
    rep.loss_total = total_loss(rep.loss_pho, rep.loss_adv, rep.loss_consis, rep.loss_pse, rep.loss_kl,
                                cfg.lambda_adv, cfg.lambda_consis, cfg.lambda_pse, cfg.lambda_kl);

    // --- Metrics against ground truth ------------------------------------
    if (scene.gt_flow.width == K.width && scene.gt_flow.height == K.height) {
        rep.has_gt = true;
        Image sample_mask = Image::make(K.width, K.height, 1, Semantics::Luma);
        for (std::size_t i = 0; i < result.flow2d.valid.size(); ++i)
            sample_mask.data[i] = result.flow2d.valid[i] ? 1.0 : 0.0;
        rep.epe_2d = metric_epe(result.flow2d, scene.gt_flow, sample_mask);
        rep.acc_2d = metric_acc(result.flow2d, scene.gt_flow, sample_mask, 1.0);

        const std::vector<Vec3> gt3d(static_cast<std::size_t>(fwd.samples.size()), scene.translation);
        rep.epe_3d = metric_epe(fwd.flow3d, gt3d, fwd.flow3d.valid);
        rep.acc_3d = metric_acc(fwd.flow3d, gt3d, fwd.flow3d.valid, 0.05);
    }

    rep.seconds_total = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();

    // --- Artifacts --------------------------------------------------------
    if (!cfg.output_dir.empty()) {
        std::ofstream txt(cfg.output_dir + "/report.txt");
        if (!txt) throw InputError(cfg.output_dir + "/report.txt: cannot open for writing");
        txt << report_text(rep);
        std::ofstream js(cfg.output_dir + "/report.json");
        if (!js) throw InputError(cfg.output_dir + "/report.json: cannot open for writing");
        js << report_json(rep);
        save_flow(result.flow2d, cfg.output_dir + "/flow.vmfl");
        save_image(flow_visualization(result.flow2d_dense), cfg.output_dir + "/flow_vis.ppm");
        if (cfg.dump_debug && fwd.fused_present) {
            save_correlation_dump(fwd.fused.x, cfg.output_dir + "/corr_fused_x.txt");
            save_correlation_dump(fwd.fused.y, cfg.output_dir + "/corr_fused_y.txt");
            save_correlation_dump(fwd.fused.z, cfg.output_dir + "/corr_fused_z.txt");
        }
    }
    return result;
}

namespace {

void emit_fields(const Report& r, const std::function<void(const char*, double)>& num,
                 const std::function<void(const char*, bool)>& flag) {
    num("loss_pho", r.loss_pho);
    num("loss_adv", r.loss_adv);
    num("loss_consis", r.loss_consis);
    num("loss_pse", r.loss_pse);
    num("loss_kl", r.loss_kl);
    num("loss_total", r.loss_total);
    flag("adv_scores_supplied", r.adv_scores_supplied);
    flag("pse_predictions_supplied", r.pse_predictions_supplied);
    flag("has_gt", r.has_gt);
    num("epe_2d_px", r.epe_2d);
    num("acc_2d_percent", r.acc_2d);
    num("epe_3d_m", r.epe_3d);
    num("acc_3d_percent", r.acc_3d);
    num("clamp_count_t", r.clamp_count_t);
    num("clamp_count_t2", r.clamp_count_t2);
    num("coverage_before", r.coverage_before);
    num("coverage_after", r.coverage_after);
    num("cluster_count", r.cluster_count);
    num("cluster_objective", r.cluster_objective);
    num("median_sample_depth", r.median_sample_depth);
    num("valid_samples", r.valid_samples);
    num("sample_total", r.sample_total);
    num("kl_skipped_terms", r.kl_skipped_terms);
    num("event_count", r.event_count);
    flag("luminance_on", r.luminance_on);
    flag("structure_on", r.structure_on);
    flag("motion_fusion_on", r.motion_fusion_on);
}

}  // namespace

double total_loss(double pho, double adv, double consis, double pse, double kl, double lambda1, double lambda2,
                  double lambda3, double lambda4) {
    require_finite(pho, "total_loss: pho");
    require_finite(adv, "total_loss: adv");
    require_finite(consis, "total_loss: consis");
    require_finite(pse, "total_loss: pse");
    require_finite(kl, "total_loss: kl");
    return pho + lambda1 * adv + lambda2 * consis + lambda3 * pse + lambda4 * kl;
}

std::string report_text(const Report& r) {
    std::ostringstream os;
    char buf[64];
    emit_fields(
        r,
        [&](const char* k, double v) {
            require_finite(v, k);
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            os << k << ": " << buf << "\n";
        },
        [&](const char* k, bool v) { os << k << ": " << (v ? "true" : "false") << "\n"; });
    return os.str();
}

std::string report_json(const Report& r) {
    nlohmann::ordered_json j;
    emit_fields(
        r,
        [&](const char* k, double v) {
            require_finite(v, k);
            j[k] = v;
        },
        [&](const char* k, bool v) { j[k] = v; });
    return j.dump(2) + "\n";
}

}  // namespace vmf
