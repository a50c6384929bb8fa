#include "vmf/cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "vmf/config.hpp"
#include "vmf/gradcheck.hpp"
#include "vmf/io.hpp"
#include "vmf/luminance.hpp"
#include "vmf/metrics.hpp"
#include "vmf/pipeline.hpp"
#include "vmf/synthetic.hpp"

namespace vmf {

namespace {

PipelineConfig assemble_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    PipelineConfig cfg;
    if (!config_path.empty()) cfg = load_config(config_path);
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw InputError("--set expects key=value, got `" + kv + "`");
        apply_override(cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    cfg.validate();
    return cfg;
}

int cmd_generate(const PipelineConfig& cfg, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const SyntheticScene scene = generate_synthetic(cfg.gen, cfg.event_threshold, cfg.seed);
    save_scene(scene, out_dir);
    save_config(cfg, out_dir + "/pipeline.cfg");
    std::cout << "scene written to " << out_dir << " (" << scene.events.events.size() << " events, "
              << scene.cloud_t.points.size() << " LiDAR points per frame)\n";
    return 0;
}

int cmd_run(PipelineConfig cfg) {
    if (!cfg.output_dir.empty()) std::filesystem::create_directories(cfg.output_dir);
    const PipelineResult result = run_pipeline(cfg);
    std::cout << report_text(result.report);
    std::printf("seconds_total: %.3f\n", result.report.seconds_total);
    return 0;
}

int cmd_loss(PipelineConfig cfg, const std::string& name, const std::string& scores_path) {
    if (name == "adv") {
        if (scores_path.empty()) throw InputError("loss adv: --scores FILE is required");
        cfg.adv_scores_path = scores_path;
    }
    cfg.output_dir.clear();
    const Report rep = run_pipeline(cfg).report;
    double value = 0.0;
    if (name == "adv") {
        if (!rep.adv_scores_supplied) throw InputError("loss adv: scores were not consumed");
        value = rep.loss_adv;
    } else if (name == "consis") {
        value = rep.loss_consis;
    } else if (name == "pse") {
        if (!rep.pse_predictions_supplied)
            throw InputError("loss pse: set pred_depth_t_path/pred_depth_t2_path (e.g. via --set)");
        value = rep.loss_pse;
    } else if (name == "kl") {
        value = rep.loss_kl;
    } else if (name == "pho") {
        value = rep.loss_pho;
    } else {
        throw InputError("loss: unknown loss `" + name + "` (adv|consis|pse|kl|pho)");
    }
    std::printf("loss_%s: %.17g\n", name.c_str(), value);
    return 0;
}

int cmd_gradcheck(int seeds, const std::string& only) {
    const std::vector<GradCheckResult> results = run_gradcheck(seeds, only);
    bool all_passed = true;
    for (const GradCheckResult& r : results) {
        std::printf("%-8s %s  max_rel_err=%.3g  checked=%zu  excluded=%zu  seeds=%d\n", r.loss_name.c_str(),
                    r.passed ? "PASS" : "FAIL", r.max_rel_err, r.checked, r.excluded, r.seeds);
        all_passed = all_passed && r.passed;
    }
    return all_passed ? 0 : 3;
}

int cmd_metrics(const std::string& pred_path, const std::string& gt_path, double threshold) {
    const FlowField2D pred = load_flow(pred_path);
    const FlowField2D gt = load_flow(gt_path);
    if (pred.width != gt.width || pred.height != gt.height)
        throw InputError("metrics: flow dimensions differ");
    Image mask = Image::make(pred.width, pred.height, 1, Semantics::Luma);
    for (std::size_t i = 0; i < mask.data.size(); ++i)
        mask.data[i] = (pred.valid[i] && gt.valid[i]) ? 1.0 : 0.0;
    std::printf("epe_px: %.17g\n", metric_epe(pred, gt, mask));
    std::printf("acc_percent: %.17g\n", metric_acc(pred, gt, mask, threshold));
    return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
    CLI::App app{"hierarchical RGB-event-LiDAR visual-motion fusion pipeline"};
    app.require_subcommand(1);

    std::string config_path, out_dir, scene_dir, loss_name, scores_path, pred_path, gt_path, only_loss;
    std::vector<std::string> overrides;
    int seeds = 20;
    double threshold = 1.0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "pipeline config file");
        cmd->add_option("--set", overrides, "override a config key (key=value), repeatable");
    };

    CLI::App* generate = app.add_subcommand("generate", "emit a synthetic scene to a directory");
    add_common(generate);
    generate->add_option("--out", out_dir, "destination directory")->required();

    CLI::App* run = app.add_subcommand("run", "run the full fusion pipeline");
    add_common(run);
    run->add_option("--scene", scene_dir, "scene directory (overrides scene_dir)");
    run->add_option("--out", out_dir, "output directory (overrides output_dir)");

    CLI::App* loss = app.add_subcommand("loss", "evaluate one loss on the configured scene");
    add_common(loss);
    loss->add_option("--name", loss_name, "adv|consis|pse|kl|pho")->required();
    loss->add_option("--scene", scene_dir, "scene directory");
    loss->add_option("--scores", scores_path, "discriminator score file (adv)");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of analytic gradients");
    gradcheck->add_option("--seeds", seeds, "seeds per loss (default 20)");
    gradcheck->add_option("--loss", only_loss, "restrict to one loss");

    CLI::App* metrics = app.add_subcommand("metrics", "EPE/ACC between two flow files");
    metrics->add_option("--pred", pred_path, "predicted flow (VMFL)")->required();
    metrics->add_option("--gt", gt_path, "ground-truth flow (VMFL)")->required();
    metrics->add_option("--threshold", threshold, "accuracy threshold in pixels (default 1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (generate->parsed()) {
            PipelineConfig cfg = assemble_config(config_path, overrides);
            return cmd_generate(cfg, out_dir);
        }
        if (run->parsed()) {
            PipelineConfig cfg = assemble_config(config_path, overrides);
            if (!scene_dir.empty()) cfg.scene_dir = scene_dir;
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            return cmd_run(cfg);
        }
        if (loss->parsed()) {
            PipelineConfig cfg = assemble_config(config_path, overrides);
            if (!scene_dir.empty()) cfg.scene_dir = scene_dir;
            return cmd_loss(cfg, loss_name, scores_path);
        }
        if (gradcheck->parsed()) return cmd_gradcheck(seeds, only_loss);
        if (metrics->parsed()) return cmd_metrics(pred_path, gt_path, threshold);
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 2;
    }
    return 0;
}

}  // namespace vmf
