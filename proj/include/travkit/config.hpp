#pragma once

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>

#include "travkit/footprint.hpp"
#include "travkit/fusion.hpp"
#include "travkit/net.hpp"
#include "travkit/prior.hpp"
#include "travkit/train.hpp"

// Single YAML configuration for the whole pipeline. Keys are namespaced by
// stage; loading rejects unknown keys, saving materializes every default so
// output directories carry a complete audit record.

namespace travkit {

struct PromptParams {
    int k_pos = 8;
    int k_neg = 8;
    double min_dist = 24.0;       // pixels, farthest-point sampling floor
    double border_margin = 8.0;   // pixels
    double dedupe_radius = 8.0;   // pixels
    double footprint_dilate = 15.0;  // exclusion zone for negative prompts
};

struct PipelineConfig {
    // footprint.*
    RobotFootprintSpec footprint;
    double footprint_horizon = 5.0;   // seconds
    double footprint_stride = 0.1;    // seconds
    double footprint_occl_margin = 0.3;  // meters
    double footprint_oversample = 1.0;
    bool footprint_include_past = false;
    // prior.*
    double prior_radius = 0.5;
    int prior_min_neighbors = 8;
    SeedThresholds prior;
    // prompt.*
    PromptParams prompt;
    // fusion.*
    MaskSelectionConfig fusion;
    double fusion_r_neg = 3.0;
    int fusion_min_component = 64;
    // net.*
    int net_base_width = 32;
    int net_stages = 4;
    bool net_disable_rgb_stream = false;
    bool net_disable_geo_stream = false;
    GeoNorm net_norm;
    // train.*
    TrainConfig train;

    NetConfig net_config() const {
        NetConfig n;
        n.base_width = net_base_width;
        n.stages = net_stages;
        n.disable_rgb_stream = net_disable_rgb_stream;
        n.disable_geo_stream = net_disable_geo_stream;
        n.seed = train.seed;
        return n;
    }
    TrainConfig train_config() const {
        TrainConfig t = train;
        t.base_width = net_base_width;
        t.stages = net_stages;
        t.disable_rgb_stream = net_disable_rgb_stream;
        t.disable_geo_stream = net_disable_geo_stream;
        return t;
    }
};

namespace config_detail {

struct Field {
    enum Kind { kDouble, kInt, kBool, kUInt64 } kind;
    std::function<double&(PipelineConfig&)> d;
    std::function<int&(PipelineConfig&)> i;
    std::function<bool&(PipelineConfig&)> b;
    std::function<uint64_t&(PipelineConfig&)> u;
};

inline Field fd(double PipelineConfig::* p) {
    return {Field::kDouble, [p](PipelineConfig& c) -> double& { return c.*p; }, nullptr, nullptr};
}
inline Field fdg(std::function<double&(PipelineConfig&)> g) {
    return {Field::kDouble, std::move(g), nullptr, nullptr};
}
inline Field fig(std::function<int&(PipelineConfig&)> g) {
    return {Field::kInt, nullptr, std::move(g), nullptr};
}
inline Field fbg(std::function<bool&(PipelineConfig&)> g) {
    return {Field::kBool, nullptr, nullptr, std::move(g), nullptr};
}
inline Field fug(std::function<uint64_t&(PipelineConfig&)> g) {
    return {Field::kUInt64, nullptr, nullptr, nullptr, std::move(g)};
}

inline const std::map<std::string, Field>& schema() {
    static const std::map<std::string, Field> s = {
        {"footprint.width", fdg([](PipelineConfig& c) -> double& { return c.footprint.width; })},
        {"footprint.length", fdg([](PipelineConfig& c) -> double& { return c.footprint.length; })},
        {"footprint.ground_offset",
         fdg([](PipelineConfig& c) -> double& { return c.footprint.ground_offset; })},
        {"footprint.horizon", fd(&PipelineConfig::footprint_horizon)},
        {"footprint.stride", fd(&PipelineConfig::footprint_stride)},
        {"footprint.occl_margin", fd(&PipelineConfig::footprint_occl_margin)},
        {"footprint.oversample", fd(&PipelineConfig::footprint_oversample)},
        {"footprint.include_past",
         fbg([](PipelineConfig& c) -> bool& { return c.footprint_include_past; })},

        {"prior.radius", fd(&PipelineConfig::prior_radius)},
        {"prior.min_neighbors", fig([](PipelineConfig& c) -> int& { return c.prior_min_neighbors; })},
        {"prior.slope_max_deg", fdg([](PipelineConfig& c) -> double& { return c.prior.slope_max_deg; })},
        {"prior.height_max", fdg([](PipelineConfig& c) -> double& { return c.prior.height_max; })},
        {"prior.roughness_max",
         fdg([](PipelineConfig& c) -> double& { return c.prior.roughness_max; })},
        {"prior.slope_neg_deg", fdg([](PipelineConfig& c) -> double& { return c.prior.slope_neg_deg; })},
        {"prior.height_neg", fdg([](PipelineConfig& c) -> double& { return c.prior.height_neg; })},

        {"prompt.k_pos", fig([](PipelineConfig& c) -> int& { return c.prompt.k_pos; })},
        {"prompt.k_neg", fig([](PipelineConfig& c) -> int& { return c.prompt.k_neg; })},
        {"prompt.min_dist", fdg([](PipelineConfig& c) -> double& { return c.prompt.min_dist; })},
        {"prompt.border_margin",
         fdg([](PipelineConfig& c) -> double& { return c.prompt.border_margin; })},
        {"prompt.dedupe_radius",
         fdg([](PipelineConfig& c) -> double& { return c.prompt.dedupe_radius; })},
        {"prompt.footprint_dilate",
         fdg([](PipelineConfig& c) -> double& { return c.prompt.footprint_dilate; })},

        {"fusion.score_min", fdg([](PipelineConfig& c) -> double& { return c.fusion.score_min; })},
        {"fusion.neg_frac_max",
         fdg([](PipelineConfig& c) -> double& { return c.fusion.neg_frac_max; })},
        {"fusion.area_frac_max",
         fdg([](PipelineConfig& c) -> double& { return c.fusion.area_frac_max; })},
        {"fusion.r_neg", fd(&PipelineConfig::fusion_r_neg)},
        {"fusion.min_component",
         fig([](PipelineConfig& c) -> int& { return c.fusion_min_component; })},

        {"net.base_width", fig([](PipelineConfig& c) -> int& { return c.net_base_width; })},
        {"net.stages", fig([](PipelineConfig& c) -> int& { return c.net_stages; })},
        {"net.disable_rgb_stream",
         fbg([](PipelineConfig& c) -> bool& { return c.net_disable_rgb_stream; })},
        {"net.disable_geo_stream",
         fbg([](PipelineConfig& c) -> bool& { return c.net_disable_geo_stream; })},
        {"net.h_clip", fdg([](PipelineConfig& c) -> double& { return c.net_norm.h_clip; })},
        {"net.d_max", fdg([](PipelineConfig& c) -> double& { return c.net_norm.d_max; })},
        {"net.d_min", fdg([](PipelineConfig& c) -> double& { return c.net_norm.d_min; })},

        {"train.seed", fug([](PipelineConfig& c) -> uint64_t& { return c.train.seed; })},
        {"train.epochs", fig([](PipelineConfig& c) -> int& { return c.train.epochs; })},
        {"train.batch_size", fig([](PipelineConfig& c) -> int& { return c.train.batch_size; })},
        {"train.learning_rate",
         fdg([](PipelineConfig& c) -> double& { return c.train.learning_rate; })},
        {"train.lambda_aux",
         fdg([](PipelineConfig& c) -> double& { return c.train.weights.lambda_aux; })},
        {"train.w_sparse",
         fdg([](PipelineConfig& c) -> double& { return c.train.weights.w_sparse; })},
        {"train.disable_sparse_loss",
         fbg([](PipelineConfig& c) -> bool& { return c.train.disable_sparse_loss; })},
    };
    return s;
}

}  // namespace config_detail

inline PipelineConfig parse_config(const YAML::Node& root) {
    PipelineConfig cfg;
    if (!root.IsDefined() || root.IsNull()) return cfg;
    if (!root.IsMap()) throw ConfigError("config root must be a mapping");
    const auto& schema = config_detail::schema();
    for (const auto& section : root) {
        std::string sec = section.first.as<std::string>();
        if (!section.second.IsMap())
            throw ConfigError("config section is not a mapping: " + sec);
        for (const auto& entry : section.second) {
            std::string key = sec + "." + entry.first.as<std::string>();
            auto it = schema.find(key);
            if (it == schema.end()) throw ConfigError("unknown config key: " + key);
            try {
                switch (it->second.kind) {
                    case config_detail::Field::kDouble:
                        it->second.d(cfg) = entry.second.as<double>();
                        break;
                    case config_detail::Field::kInt:
                        it->second.i(cfg) = entry.second.as<int>();
                        break;
                    case config_detail::Field::kBool:
                        it->second.b(cfg) = entry.second.as<bool>();
                        break;
                    case config_detail::Field::kUInt64:
                        it->second.u(cfg) = entry.second.as<uint64_t>();
                        break;
                }
            } catch (const YAML::Exception&) {
                throw ConfigError("bad value for config key: " + key);
            }
        }
    }
    return cfg;
}

inline PipelineConfig load_config(const std::string& path) {
    YAML::Node root;
    try {
        root = YAML::LoadFile(path);
    } catch (const YAML::Exception& e) {
        throw ConfigError("cannot load config " + path + ": " + e.what());
    }
    return parse_config(root);
}

// full materialization: every key present, deterministic order and format
inline std::string materialize_config(const PipelineConfig& cfg) {
    std::ostringstream out;
    out.precision(17);
    PipelineConfig& mut = const_cast<PipelineConfig&>(cfg);
    std::string open_section;
    for (const auto& [key, field] : config_detail::schema()) {
        auto dot = key.find('.');
        std::string sec = key.substr(0, dot), name = key.substr(dot + 1);
        if (sec != open_section) {
            out << sec << ":\n";
            open_section = sec;
        }
        out << "  " << name << ": ";
        switch (field.kind) {
            case config_detail::Field::kDouble:
                out << field.d(mut);
                break;
            case config_detail::Field::kInt:
                out << field.i(mut);
                break;
            case config_detail::Field::kBool:
                out << (field.b(mut) ? "true" : "false");
                break;
            case config_detail::Field::kUInt64:
                out << field.u(mut);
                break;
        }
        out << "\n";
    }
    return out.str();
}

inline void save_config(const PipelineConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write config: " + path);
    out << materialize_config(cfg);
}

}  // namespace travkit
