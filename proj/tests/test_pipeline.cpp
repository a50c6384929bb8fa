#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "vmf/cli.hpp"
#include "vmf/color.hpp"
#include "vmf/events.hpp"
#include "vmf/config.hpp"
#include "vmf/correlation.hpp"
#include "vmf/io.hpp"
#include "vmf/luminance.hpp"
#include "vmf/metrics.hpp"
#include "vmf/pipeline.hpp"
#include "vmf/synthetic.hpp"

using namespace vmf;

namespace {

std::string temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("vmf_pipe_" + name);
    std::filesystem::create_directories(dir);
    return dir.string();
}

PipelineConfig small_config() {
    PipelineConfig cfg;
    cfg.gen.width = 64;
    cfg.gen.height = 64;
    cfg.gen.focal = 64.0;
    cfg.gen.translate_x = 0.0625;  // 1 px at 4 m
    cfg.sample_count = 200;
    cfg.cluster_count = 16;
    return cfg;
}

}  // namespace

TEST_CASE("total_loss composition") {
    CHECK(total_loss(0.7, 3.0, 5.0, 7.0, 9.0, 0, 0, 0, 0) == 0.7);
    CHECK(total_loss(1, 1, 1, 1, 1, 1, 1, 1, 1) == 5.0);
    Rng rng(139);
    for (int i = 0; i < 20; ++i) {
        const double pho = rng.normal(), adv = rng.normal(), consis = rng.normal(), pse = rng.normal(),
                     kl = rng.normal();
        const double l1 = rng.uniform(), l2 = rng.uniform(), l3 = rng.uniform(), l4 = rng.uniform();
        CHECK(total_loss(pho, adv, consis, pse, kl, l1, l2, l3, l4) ==
              doctest::Approx(pho + l1 * adv + l2 * consis + l3 * pse + l4 * kl).epsilon(1e-15));
    }
    CHECK_THROWS_AS(total_loss(std::nan(""), 0, 0, 0, 0, 1, 1, 1, 1), NumericError);
}

TEST_CASE("flow metrics anchors and oracle") {
    const int w = 8, h = 6;
    FlowField2D pred = FlowField2D::make(w, h);
    FlowField2D gt = FlowField2D::make(w, h);
    Image mask = Image::make(w, h, 1, Semantics::Luma, 1.0);
    Rng rng(149);
    for (std::size_t i = 0; i < pred.du.size(); ++i) {
        gt.du[i] = rng.uniform(-2, 2);
        gt.dv[i] = rng.uniform(-2, 2);
        gt.valid[i] = 1;
        pred.du[i] = gt.du[i];
        pred.dv[i] = gt.dv[i];
        pred.valid[i] = 1;
    }
    CHECK(metric_epe(pred, gt, mask) == 0.0);
    CHECK(metric_acc(pred, gt, mask, 1.0) == 100.0);

    // Uniform 2 px error against a 1 px threshold.
    for (std::size_t i = 0; i < pred.du.size(); ++i) pred.du[i] = gt.du[i] + 2.0;
    CHECK(metric_acc(pred, gt, mask, 1.0) == 0.0);
    CHECK(metric_epe(pred, gt, mask) == doctest::Approx(2.0).epsilon(1e-12));

    // Random errors against the per-element oracle.
    for (std::size_t i = 0; i < pred.du.size(); ++i) {
        pred.du[i] = gt.du[i] + rng.uniform(-1, 1);
        pred.dv[i] = gt.dv[i] + rng.uniform(-1, 1);
        if (rng.uniform() < 0.3) mask.data[i] = 0.0;
    }
    double sum = 0.0;
    std::size_t count = 0, hits = 0;
    for (std::size_t i = 0; i < pred.du.size(); ++i) {
        if (mask.data[i] == 0.0) continue;
        const double err = std::hypot(pred.du[i] - gt.du[i], pred.dv[i] - gt.dv[i]);
        sum += err;
        ++count;
        if (err < 0.8) ++hits;
    }
    CHECK(metric_epe(pred, gt, mask) == doctest::Approx(sum / count).epsilon(1e-12));
    CHECK(metric_acc(pred, gt, mask, 0.8) == doctest::Approx(100.0 * hits / count).epsilon(1e-12));

    const Image zeros = Image::make(w, h, 1, Semantics::Luma, 0.0);
    CHECK_THROWS_AS(metric_epe(pred, gt, zeros), InputError);

    // 3D variants.
    FlowField3D p3;
    p3.flow = {{1, 0, 0}, {0, 0, 0}};
    p3.valid = {1, 1};
    const std::vector<Vec3> g3 = {{1, 0, 0}, {0.03, 0, 0}};
    const std::vector<std::uint8_t> m3 = {1, 1};
    CHECK(metric_epe(p3, g3, m3) == doctest::Approx(0.015).epsilon(1e-12));
    CHECK(metric_acc(p3, g3, m3, 0.05) == 100.0);
    CHECK(metric_acc(p3, g3, m3, 0.02) == 50.0);
}

TEST_CASE("generator anchors") {
    GeneratorConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.focal = 64.0;

    // Zero motion: zero flow, no events.
    cfg.translate_x = 0.0;
    SyntheticScene scene = generate_synthetic(cfg, 0.04, 3);
    CHECK(scene.events.events.empty());
    for (std::size_t i = 0; i < scene.gt_flow.du.size(); ++i) {
        CHECK(scene.gt_flow.du[i] == 0.0);
        CHECK(scene.gt_flow.dv[i] == 0.0);
    }

    // Pure x translation: du = f * tx / z uniform on the plane.
    cfg.translate_x = 0.125;
    cfg.quad_enabled = false;
    scene = generate_synthetic(cfg, 0.04, 3);
    const double expected_du = cfg.focal * cfg.translate_x / cfg.plane_depth;
    for (int y = 0; y < 64; y += 7)
        for (int x = 0; x < 64; x += 7) {
            CHECK(scene.gt_flow.du[scene.gt_flow.index(x, y)] == doctest::Approx(expected_du).epsilon(1e-12));
            CHECK(scene.gt_flow.dv[scene.gt_flow.index(x, y)] == doctest::Approx(0.0).epsilon(1e-12));
        }

    // Quad scenes occlude some plane pixels.
    cfg.quad_enabled = true;
    scene = generate_synthetic(cfg, 0.04, 3);
    std::size_t occluded = 0;
    for (double v : scene.gt_occlusion.data)
        if (v == 0.0) ++occluded;
    CHECK(occluded > 0);

    // Event reconstruction bound (also enforced by the generator itself).
    const Image acc = accumulate_intensity(scene.events, 0.04);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            const double delta = scene.clean_luma_t2.at(x, y) - scene.clean_luma_t.at(x, y);
            CHECK(std::abs(acc.at(x, y) - delta) <= 0.04 + 1e-12);
        }

    // Degenerate geometry is rejected.
    GeneratorConfig bad = cfg;
    bad.plane_depth = -1.0;
    CHECK_THROWS_AS(generate_synthetic(bad, 0.04, 3), InputError);
    bad = cfg;
    bad.quad_depth = bad.plane_depth + 1.0;
    CHECK_THROWS_AS(generate_synthetic(bad, 0.04, 3), InputError);
}

TEST_CASE("scene warp self-consistency") {
    GeneratorConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.focal = 64.0;
    cfg.translate_x = 0.125;  // 2 px at 4 m, 4 px at 2 m: exact resampling
    const SyntheticScene scene = generate_synthetic(cfg, 0.04, 11);
    const WarpedImage warped = warp_image(scene.clean_luma_t2, scene.gt_flow);
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (scene.gt_occlusion.at(x, y) == 0.0 || !warped.valid[scene.gt_flow.index(x, y)]) continue;
            CHECK(std::abs(warped.image.at(x, y) - scene.clean_luma_t.at(x, y)) <= 2.0 / 255.0);
        }
}

TEST_CASE("scene save/load round trip") {
    const std::string dir = temp_dir("scene");
    GeneratorConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.focal = 64.0;
    const SyntheticScene scene = generate_synthetic(cfg, 0.04, 17);
    save_scene(scene, dir);
    const SyntheticScene back = load_scene(dir);
    CHECK(back.K.f == scene.K.f);
    CHECK(back.translation.x == scene.translation.x);
    CHECK(back.event_threshold == scene.event_threshold);
    CHECK(back.events.events.size() == scene.events.events.size());
    CHECK(back.cloud_t.points.size() == scene.cloud_t.points.size());
    // Flow survives the f32 container bit-exactly after the first save.
    for (std::size_t i = 0; i < scene.gt_flow.du.size(); ++i)
        CHECK(back.gt_flow.du[i] == static_cast<float>(scene.gt_flow.du[i]));
    // Depth is documented as millimeter-quantized.
    for (std::size_t i = 0; i < scene.gt_depth_t.data.size(); ++i)
        CHECK(std::abs(back.gt_depth_t.data[i] - scene.gt_depth_t.data[i]) <= 5e-4 + 1e-12);
}

TEST_CASE("pipeline on a zero-motion scene") {
    PipelineConfig cfg = small_config();
    cfg.gen.translate_x = 0.0;
    cfg.gen.quad_enabled = false;
    const PipelineResult result = run_pipeline(cfg);
    // The correlation readout wobbles sub-pixel on weak feature anchors, so
    // the endpoint error is small but not zero; every other loss that can
    // vanish does.
    CHECK(result.report.epe_2d < 0.15);
    CHECK(result.report.loss_consis == 0.0);
    CHECK(result.report.loss_adv == 0.0);
    CHECK(result.report.loss_pse == 0.0);
    CHECK(result.report.loss_pho < 0.02);
    CHECK(result.report.event_count == 0);
}

TEST_CASE("pipeline on a translation scene beats the accuracy gate") {
    PipelineConfig cfg = small_config();
    cfg.gen.quad_enabled = false;
    const PipelineResult result = run_pipeline(cfg);
    CHECK(result.report.has_gt);
    CHECK(result.report.epe_2d < 0.5);
    CHECK(result.report.acc_2d > 90.0);
}

TEST_CASE("pipeline determinism") {
    PipelineConfig cfg = small_config();
    const PipelineResult a = run_pipeline(cfg);
    const PipelineResult b = run_pipeline(cfg);
    CHECK(report_text(a.report) == report_text(b.report));
    CHECK(report_json(a.report) == report_json(b.report));
    CHECK(a.flow2d.du == b.flow2d.du);
    CHECK(a.flow2d.dv == b.flow2d.dv);
    CHECK(a.flow2d.valid == b.flow2d.valid);
}

TEST_CASE("stage isolation: downstream toggles leave upstream stats unchanged") {
    PipelineConfig cfg = small_config();
    const Report full = run_pipeline(cfg).report;

    PipelineConfig no_motion = cfg;
    no_motion.enable_motion_fusion = false;
    const Report nm = run_pipeline(no_motion).report;
    CHECK(nm.clamp_count_t == full.clamp_count_t);
    CHECK(nm.clamp_count_t2 == full.clamp_count_t2);
    CHECK(nm.coverage_before == full.coverage_before);
    CHECK(nm.coverage_after == full.coverage_after);
    CHECK(nm.cluster_objective == full.cluster_objective);
}

TEST_CASE("pipeline emits report and artifact files") {
    PipelineConfig cfg = small_config();
    cfg.output_dir = temp_dir("artifacts");
    cfg.dump_debug = true;
    const PipelineResult result = run_pipeline(cfg);
    (void)result;
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.txt"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/report.json"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/flow.vmfl"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/flow_vis.ppm"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/corr_fused_x.txt"));
    CHECK(std::filesystem::exists(cfg.output_dir + "/clusters_t.pgm"));

    // The JSON report parses and carries the text report's values.
    std::ifstream js(cfg.output_dir + "/report.json");
    const nlohmann::json parsed = nlohmann::json::parse(js);
    CHECK(parsed.contains("loss_total"));
    CHECK(parsed["has_gt"].get<bool>());

    // The emitted flow round-trips.
    const FlowField2D flow = load_flow(cfg.output_dir + "/flow.vmfl");
    CHECK(flow.width == cfg.gen.width);
}

TEST_CASE("config file round trip and overrides") {
    PipelineConfig cfg;
    CHECK(cfg.lambda_adv == 1.0);
    CHECK(cfg.lambda_consis == 0.1);
    CHECK(cfg.lambda_pse == 1.0);
    CHECK(cfg.lambda_kl == 0.5);
    CHECK(cfg.voxel_slices == 10);
    CHECK(cfg.knn_k == 5);
    CHECK(cfg.sample_count == 1000);

    cfg.seed = 99;
    cfg.gen.low_light = true;
    const std::string path = temp_dir("cfg") + "/pipeline.cfg";
    save_config(cfg, path);
    const PipelineConfig back = load_config(path);
    CHECK(config_text(back) == config_text(cfg));

    PipelineConfig tweaked = back;
    apply_override(tweaked, "corr_radius", "6");
    CHECK(tweaked.corr_radius == 6);
    apply_override(tweaked, "gen.translate_y", "0.25");
    CHECK(tweaked.gen.translate_y == 0.25);
    CHECK_THROWS_AS(apply_override(tweaked, "no_such_key", "1"), InputError);
    CHECK_THROWS_AS(apply_override(tweaked, "corr_radius", "abc"), InputError);

    PipelineConfig invalid;
    invalid.event_threshold = -1.0;
    CHECK_THROWS_AS(invalid.validate(), InputError);
}

TEST_CASE("occlusion mask against the renderer's ground truth") {
    // Forward flow from the scene; backward flow from the mirrored scene
    // whose quad footprint is the original's frame-2 footprint.
    GeneratorConfig cfg;
    cfg.width = 64;
    cfg.height = 64;
    cfg.focal = 64.0;
    cfg.translate_x = 0.125;
    const SyntheticScene fwd_scene = generate_synthetic(cfg, 0.04, 19);

    GeneratorConfig rev = cfg;
    rev.translate_x = -cfg.translate_x;
    const double shift = cfg.translate_x * cfg.focal / (cfg.quad_depth * cfg.width);
    rev.quad_x0 = cfg.quad_x0 + shift;
    rev.quad_x1 = cfg.quad_x1 + shift;
    const SyntheticScene bwd_scene = generate_synthetic(rev, 0.04, 19);

    const Image mask = occlusion_mask_2d(fwd_scene.gt_flow, bwd_scene.gt_flow);

    // Mask zeros and GT occlusion zeros agree within one pixel of dilation.
    auto near_zero_of = [&](const Image& ref, int x, int y) {
        for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
                const int nx = x + dx, ny = y + dy;
                if (nx < 0 || nx >= ref.width || ny < 0 || ny >= ref.height) return true;  // frame edge
                if (ref.at(nx, ny) == 0.0) return true;
            }
        return false;
    };
    for (int y = 0; y < 64; ++y)
        for (int x = 0; x < 64; ++x) {
            if (mask.at(x, y) == 0.0) CHECK(near_zero_of(fwd_scene.gt_occlusion, x, y));
            if (fwd_scene.gt_occlusion.at(x, y) == 0.0) CHECK(near_zero_of(mask, x, y));
        }
}

TEST_CASE("densify_flow fills from the nearest valid sample") {
    FlowField2D sparse = FlowField2D::make(9, 9);
    sparse.du[sparse.index(1, 1)] = 2.0;
    sparse.valid[sparse.index(1, 1)] = 1;
    sparse.du[sparse.index(7, 7)] = -3.0;
    sparse.valid[sparse.index(7, 7)] = 1;
    const FlowField2D dense = densify_flow(sparse);
    CHECK(dense.du[dense.index(0, 0)] == 2.0);
    CHECK(dense.du[dense.index(8, 8)] == -3.0);
    for (std::uint8_t v : dense.valid) CHECK(v == 1);
}

TEST_CASE("CLI subcommands run in process") {
    const std::string dir = temp_dir("cli_scene");
    const std::string out = temp_dir("cli_out");

    auto run_args = [](std::initializer_list<const char*> args) {
        std::vector<const char*> argv = {"vmf"};
        argv.insert(argv.end(), args);
        return run_cli(static_cast<int>(argv.size()), argv.data());
    };

    // generate -> run --scene -> metrics against the scene's own GT.
    CHECK(run_args({"generate", "--out", dir.c_str(), "--set", "gen.width=64", "--set", "gen.height=64",
                    "--set", "gen.focal=64", "--set", "sample_count=200", "--set", "cluster_count=16"}) == 0);
    CHECK(std::filesystem::exists(dir + "/events.txt"));
    CHECK(run_args({"run", "--config", (dir + "/pipeline.cfg").c_str(), "--scene", dir.c_str(), "--out",
                    out.c_str()}) == 0);
    CHECK(std::filesystem::exists(out + "/flow.vmfl"));
    CHECK(run_args({"metrics", "--pred", (out + "/flow.vmfl").c_str(), "--gt", (dir + "/gt_flow.vmfl").c_str()}) ==
          0);

    // gradcheck subcommand, single loss.
    CHECK(run_args({"gradcheck", "--seeds", "2", "--loss", "adv"}) == 0);

    // loss subcommand with a scores file.
    const std::string scores = out + "/scores.txt";
    {
        std::ofstream f(scores);
        f << "0.4 0.6 0.5\n0.3 0.7\n";
    }
    CHECK(run_args({"loss", "--name", "adv", "--scores", scores.c_str(), "--scene", dir.c_str(), "--config",
                    (dir + "/pipeline.cfg").c_str()}) == 0);

    // Input errors exit with code 1.
    CHECK(run_args({"metrics", "--pred", "/nonexistent.vmfl", "--gt", "/nonexistent.vmfl"}) == 1);
    const std::string junk = out + "/junk.vmfl";
    {
        std::ofstream f(junk);
        f << "not a flow file";
    }
    CHECK(run_args({"metrics", "--pred", junk.c_str(), "--gt", (dir + "/gt_flow.vmfl").c_str()}) == 1);
}

TEST_CASE("stage failures carry the stage name") {
    PipelineConfig cfg = small_config();
    cfg.scene_dir = "/nonexistent/scene/dir";
    try {
        run_pipeline(cfg);
        FAIL("expected an InputError");
    } catch (const InputError& e) {
        CHECK(std::string(e.what()).find("[scene]") != std::string::npos);
    }
}

TEST_CASE("CLI loss subcommand covers every loss name") {
    const std::string dir = temp_dir("cli_loss");
    auto run_args = [](std::initializer_list<const char*> args) {
        std::vector<const char*> argv = {"vmf"};
        argv.insert(argv.end(), args);
        return run_cli(static_cast<int>(argv.size()), argv.data());
    };
    const char* shrink[] = {"gen.width=64", "gen.height=64", "gen.focal=64", "sample_count=100",
                            "cluster_count=16"};
    std::vector<const char*> base = {"loss", "--name", "kl"};
    for (const char* kv : shrink) {
        base.push_back("--set");
        base.push_back(kv);
    }
    auto with_name = [&](const char* name) {
        std::vector<const char*> argv = {"vmf"};
        std::vector<const char*> args = base;
        args[2] = name;
        argv.insert(argv.end(), args.begin(), args.end());
        return run_cli(static_cast<int>(argv.size()), argv.data());
    };
    CHECK(with_name("kl") == 0);
    CHECK(with_name("consis") == 0);
    CHECK(with_name("pho") == 0);
    CHECK(with_name("nope") == 1);
    // pse without external predictions is an input error.
    CHECK(with_name("pse") == 1);
    // adv without a scores file is an input error.
    CHECK(run_args({"loss", "--name", "adv"}) == 1);
}

TEST_CASE("fused flow beats the worst single modality and tracks the best") {
    // Low-light rigid translation: the regime where the three modalities are
    // comparable and correlation fusion has complementary signal to combine.
    // (On clean scenes the RGB volume saturates and equal-weight fusion
    // cannot track it within a constant factor.)
    for (const std::uint64_t seed : {7ULL, 23ULL}) {
        GeneratorConfig gen;
        gen.quad_enabled = false;
        gen.low_light = true;
        gen.low_light_gain = 0.15;
        gen.noise_sigma = 0.035;
        const double threshold = 0.04;
        const SyntheticScene scene = generate_synthetic(gen, threshold, seed);
        const YuvPlanes y1 = rgb_to_yuv(scene.frame_t);
        const YuvPlanes y2 = rgb_to_yuv(scene.frame_t2);
        const FeatureMap f1 = encode_features(scene.frame_t);
        const FeatureMap f2 = encode_features(scene.frame_t2);
        const auto [bdx, bdy] = estimate_global_shift(f1, f2, 4);
        const SampleSet samples = sample_points(scene.cloud_t, 1000, scene.K, 99);
        FlowField2D init = FlowField2D::make(scene.K.width, scene.K.height);
        for (std::size_t i = 0; i < init.du.size(); ++i) {
            init.du[i] = bdx;
            init.dv[i] = bdy;
            init.valid[i] = 1;
        }
        const Correlation2D cv_rgb = build_correlation_2d(f1, f2, samples, init, 4);

        // Event volumes: the pipeline's reconstruction pairing.
        const EventVoxelGrid grid = voxelize_events(scene.events, 10, threshold);
        const Image intensity = accumulate_intensity(scene.events, threshold);
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < intensity.data.size(); ++i) {
            num += (y2.y.data[i] - y1.y.data[i]) * intensity.data[i];
            den += intensity.data[i] * intensity.data[i];
        }
        const double scale = den > 0.0 ? num / den : 0.0;
        Image anchor = y2.y;
        anchor.semantics = Semantics::Intensity;
        for (std::size_t i = 0; i < anchor.data.size(); ++i) anchor.data[i] -= scale * intensity.data[i];
        const FeatureMap fa = encode_features(anchor);
        std::vector<Correlation2D> cv_event;
        for (int i = 0; i < 10; ++i) {
            Image recon = y1.y;
            recon.semantics = Semantics::Intensity;
            for (std::size_t j = 0; j < recon.data.size(); ++j)
                recon.data[j] += scale * (10.0 / 9.0) * (intensity.data[j] - grid.slices[i].data[j]);
            cv_event.push_back(build_correlation_2d(fa, encode_features(recon), samples, init, 4, i));
        }

        const FeatureSpec spec{0.08, 0.5};
        const FeatureMap fl1 = encode_features(scene.cloud_t, spec);
        const FeatureMap fl2 = encode_features(scene.cloud_t2, spec);
        std::vector<double> depths;
        for (int idx : samples.indices) depths.push_back(scene.cloud_t.points[static_cast<std::size_t>(idx)].z);
        std::sort(depths.begin(), depths.end());
        const AxisOffsets offsets = matched_axis_offsets(4, scene.K.f, depths[depths.size() / 2], bdx, bdy);
        const Correlation3D cv_lidar = build_correlation_3d(fl1, fl2, samples, offsets, spec.nn_max_dist);

        auto epe = [&](const std::vector<double>& du, const std::vector<double>& dv,
                       const std::vector<std::uint8_t>& ok) {
            double sum = 0.0;
            int n = 0;
            for (int i = 0; i < samples.size(); ++i) {
                if (!ok[static_cast<std::size_t>(i)]) continue;
                const int x = static_cast<int>(samples.u[static_cast<std::size_t>(i)]);
                const int y = static_cast<int>(samples.v[static_cast<std::size_t>(i)]);
                sum += std::hypot(du[static_cast<std::size_t>(i)] - scene.gt_flow.du[scene.gt_flow.index(x, y)],
                                  dv[static_cast<std::size_t>(i)] - scene.gt_flow.dv[scene.gt_flow.index(x, y)]);
                ++n;
            }
            REQUIRE(n > 0);
            return sum / n;
        };
        auto flow3d_epe = [&](const FlowField3D& flow) {
            std::vector<double> du(static_cast<std::size_t>(samples.size()), 0.0);
            std::vector<double> dv(static_cast<std::size_t>(samples.size()), 0.0);
            std::vector<std::uint8_t> ok(static_cast<std::size_t>(samples.size()), 0);
            for (int i = 0; i < samples.size(); ++i) {
                if (!flow.valid[static_cast<std::size_t>(i)]) continue;
                const Vec3 p = scene.cloud_t.points[static_cast<std::size_t>(samples.indices[static_cast<std::size_t>(i)])];
                const Vec3 q = p + flow.flow[static_cast<std::size_t>(i)];
                du[static_cast<std::size_t>(i)] = scene.K.f * q.x / q.z + scene.K.cx - samples.u[static_cast<std::size_t>(i)];
                dv[static_cast<std::size_t>(i)] = scene.K.f * q.y / q.z + scene.K.cy - samples.v[static_cast<std::size_t>(i)];
                ok[static_cast<std::size_t>(i)] = 1;
            }
            return epe(du, dv, ok);
        };

        const double tau = 0.05;
        const SampleFlow2D rgb_flow = soft_argmax_flow_2d(cv_rgb, tau, bdx, bdy);
        const double epe_rgb = epe(rgb_flow.du, rgb_flow.dv, rgb_flow.valid);

        Correlation2D event_mean = cv_event[0];
        for (std::size_t b = 0; b < event_mean.x.scores.size(); ++b) {
            double sx = 0.0, sy = 0.0;
            for (int i = 0; i < 10; ++i) {
                sx += cv_event[static_cast<std::size_t>(i)].x.scores[b];
                sy += cv_event[static_cast<std::size_t>(i)].y.scores[b];
            }
            event_mean.x.scores[b] = sx / 10.0;
            event_mean.y.scores[b] = sy / 10.0;
        }
        const SampleFlow2D event_flow = soft_argmax_flow_2d(event_mean, tau, bdx, bdy);
        const double epe_event = epe(event_flow.du, event_flow.dv, event_flow.valid);

        const FusedCorrelation lidar_only{cv_lidar.x, cv_lidar.y, cv_lidar.z};
        const double epe_lidar = flow3d_epe(soft_argmax_flow(lidar_only, offsets, tau));

        const FusedCorrelation fused = fuse_correlation(cv_rgb, cv_event, cv_lidar);
        const double epe_fused = flow3d_epe(soft_argmax_flow(fused, offsets, tau));

        const double best = std::min({epe_rgb, epe_event, epe_lidar});
        const double worst = std::max({epe_rgb, epe_event, epe_lidar});
        CHECK(epe_fused < worst);
        CHECK(epe_fused <= best * 1.1);
    }
}
