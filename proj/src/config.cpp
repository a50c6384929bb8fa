#include "vmf/config.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>
#include <vector>

#include "vmf/numeric.hpp"

namespace vmf {

namespace {

enum class Kind { Double, Int, Bool, U64, String };

struct Field {
    const char* name;
    Kind kind;
    void* ptr;
};

std::vector<Field> fields(PipelineConfig& c) {
    return {
        {"lambda_adv", Kind::Double, &c.lambda_adv},
        {"lambda_consis", Kind::Double, &c.lambda_consis},
        {"lambda_pse", Kind::Double, &c.lambda_pse},
        {"lambda_kl", Kind::Double, &c.lambda_kl},
        {"event_threshold", Kind::Double, &c.event_threshold},
        {"voxel_slices", Kind::Int, &c.voxel_slices},
        {"knn_k", Kind::Int, &c.knn_k},
        {"sample_count", Kind::Int, &c.sample_count},
        {"corr_radius", Kind::Int, &c.corr_radius},
        {"cluster_count", Kind::Int, &c.cluster_count},
        {"cluster_iters", Kind::Int, &c.cluster_iters},
        {"soft_argmax_tau", Kind::Double, &c.soft_argmax_tau},
        {"tau_occ", Kind::Double, &c.tau_occ},
        {"spatial_norm", Kind::Double, &c.spatial_norm},
        {"density_radius", Kind::Double, &c.density_radius},
        {"nn_max_dist", Kind::Double, &c.nn_max_dist},
        {"seed", Kind::U64, &c.seed},
        {"enable_luminance", Kind::Bool, &c.enable_luminance},
        {"enable_structure", Kind::Bool, &c.enable_structure},
        {"enable_motion_fusion", Kind::Bool, &c.enable_motion_fusion},
        {"fuse_event_weight", Kind::Double, &c.fuse_event_weight},
        {"fuse_rgb_weight", Kind::Double, &c.fuse_rgb_weight},
        {"scene_dir", Kind::String, &c.scene_dir},
        {"output_dir", Kind::String, &c.output_dir},
        {"adv_scores_path", Kind::String, &c.adv_scores_path},
        {"pred_depth_t_path", Kind::String, &c.pred_depth_t_path},
        {"pred_depth_t2_path", Kind::String, &c.pred_depth_t2_path},
        {"dump_debug", Kind::Bool, &c.dump_debug},
        {"gen.width", Kind::Int, &c.gen.width},
        {"gen.height", Kind::Int, &c.gen.height},
        {"gen.focal", Kind::Double, &c.gen.focal},
        {"gen.plane_depth", Kind::Double, &c.gen.plane_depth},
        {"gen.quad_enabled", Kind::Bool, &c.gen.quad_enabled},
        {"gen.quad_depth", Kind::Double, &c.gen.quad_depth},
        {"gen.quad_x0", Kind::Double, &c.gen.quad_x0},
        {"gen.quad_y0", Kind::Double, &c.gen.quad_y0},
        {"gen.quad_x1", Kind::Double, &c.gen.quad_x1},
        {"gen.quad_y1", Kind::Double, &c.gen.quad_y1},
        {"gen.translate_x", Kind::Double, &c.gen.translate_x},
        {"gen.translate_y", Kind::Double, &c.gen.translate_y},
        {"gen.translate_z", Kind::Double, &c.gen.translate_z},
        {"gen.window", Kind::Double, &c.gen.window},
        {"gen.beam_step", Kind::Int, &c.gen.beam_step},
        {"gen.beam_top_fraction", Kind::Double, &c.gen.beam_top_fraction},
        {"gen.lidar_reflectivity_floor", Kind::Double, &c.gen.lidar_reflectivity_floor},
        {"gen.low_light", Kind::Bool, &c.gen.low_light},
        {"gen.low_light_gain", Kind::Double, &c.gen.low_light_gain},
        {"gen.noise_sigma", Kind::Double, &c.gen.noise_sigma},
    };
}

std::string format_value(const Field& f) {
    char buf[64];
    switch (f.kind) {
        case Kind::Double:
            std::snprintf(buf, sizeof(buf), "%.17g", *static_cast<double*>(f.ptr));
            return buf;
        case Kind::Int:
            return std::to_string(*static_cast<int*>(f.ptr));
        case Kind::Bool:
            return *static_cast<bool*>(f.ptr) ? "true" : "false";
        case Kind::U64:
            return std::to_string(*static_cast<std::uint64_t*>(f.ptr));
        case Kind::String:
            return *static_cast<std::string*>(f.ptr);
    }
    return {};
}

void parse_value(const Field& f, const std::string& value) {
    try {
        switch (f.kind) {
            case Kind::Double: {
                std::size_t used = 0;
                const double v = std::stod(value, &used);
                if (used != value.size()) throw InputError("trailing characters");
                *static_cast<double*>(f.ptr) = v;
                return;
            }
            case Kind::Int: {
                std::size_t used = 0;
                const int v = std::stoi(value, &used);
                if (used != value.size()) throw InputError("trailing characters");
                *static_cast<int*>(f.ptr) = v;
                return;
            }
            case Kind::Bool: {
                if (value == "true" || value == "1") *static_cast<bool*>(f.ptr) = true;
                else if (value == "false" || value == "0") *static_cast<bool*>(f.ptr) = false;
                else throw InputError("expected true/false");
                return;
            }
            case Kind::U64: {
                std::size_t used = 0;
                const unsigned long long v = std::stoull(value, &used);
                if (used != value.size()) throw InputError("trailing characters");
                *static_cast<std::uint64_t*>(f.ptr) = v;
                return;
            }
            case Kind::String:
                *static_cast<std::string*>(f.ptr) = value;
                return;
        }
    } catch (const InputError&) {
        throw;
    } catch (...) {
        throw InputError(std::string("config: cannot parse value `") + value + "` for key " + f.name);
    }
}

std::string trim(const std::string& s) {
    const auto a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return {};
    const auto b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

void PipelineConfig::validate() const {
    if (!(event_threshold > 0.0)) throw InputError("config: event_threshold must be > 0");
    if (voxel_slices < 1) throw InputError("config: voxel_slices must be >= 1");
    if (knn_k < 1) throw InputError("config: knn_k must be >= 1");
    if (sample_count < 1) throw InputError("config: sample_count must be >= 1");
    if (corr_radius < 1) throw InputError("config: corr_radius must be >= 1");
    if (cluster_count < 1) throw InputError("config: cluster_count must be >= 1");
    if (cluster_iters < 1) throw InputError("config: cluster_iters must be >= 1");
    if (!(soft_argmax_tau > 0.0)) throw InputError("config: soft_argmax_tau must be > 0");
    if (!(spatial_norm > 0.0)) throw InputError("config: spatial_norm must be > 0");
    if (!(density_radius > 0.0) || !(nn_max_dist > 0.0))
        throw InputError("config: feature radii must be > 0");
    if (lambda_adv < 0.0 || lambda_consis < 0.0 || lambda_pse < 0.0 || lambda_kl < 0.0)
        throw InputError("config: loss weights must be >= 0");
    if (fuse_event_weight < 0.0 || fuse_rgb_weight < 0.0)
        throw InputError("config: fusion weights must be >= 0");
    if (gen.width < 8 || gen.height < 8) throw InputError("config: gen image size too small");
    if (!(gen.focal > 0.0)) throw InputError("config: gen.focal must be > 0");
    if (gen.beam_step < 1) throw InputError("config: gen.beam_step must be >= 1");
    if (gen.beam_top_fraction < 0.0 || gen.beam_top_fraction > 0.9)
        throw InputError("config: gen.beam_top_fraction out of [0, 0.9]");
    if (!(gen.window > 0.0)) throw InputError("config: gen.window must be > 0");
}

PipelineConfig load_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw InputError(path + ": cannot open config");
    PipelineConfig cfg;
    std::string raw;
    std::size_t line_no = 0;
    while (std::getline(f, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        if (hash != std::string::npos) raw.erase(hash);
        const std::string line = trim(raw);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw InputError(path + ":" + std::to_string(line_no) + ": expected `key = value`");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        try {
            apply_override(cfg, key, value);
        } catch (const InputError& e) {
            throw InputError(path + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    return cfg;
}

void save_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw InputError(path + ": cannot open for writing");
    f << config_text(cfg);
    if (!f) throw InputError(path + ": write failed");
}

void apply_override(PipelineConfig& cfg, const std::string& key, const std::string& value) {
    for (const Field& f : fields(cfg)) {
        if (key == f.name) {
            parse_value(f, value);
            return;
        }
    }
    throw InputError("config: unknown key `" + key + "`");
}

std::string config_text(const PipelineConfig& cfg) {
    std::ostringstream os;
    auto& c = const_cast<PipelineConfig&>(cfg);  // field table wants mutable pointers
    for (const Field& f : fields(c)) os << f.name << " = " << format_value(f) << "\n";
    return os.str();
}

}  // namespace vmf
