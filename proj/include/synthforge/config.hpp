#pragma once

#include <algorithm>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/compositor.hpp"
#include "synthforge/error.hpp"
#include "synthforge/keyer.hpp"

namespace synthforge::cfg {

struct Paths {
    std::string assets;
    std::string backgrounds;
    std::string output;
};

struct EmitToggles {
    bool coco = true;
    bool yolo = true;
    bool masks = true;
};

// Union of the per-module knobs, loaded from one JSON file and overridable
// from the command line. Unknown keys are rejected so typos cannot silently
// fall back to defaults.
struct ToolConfig {
    keyer::KeyerParams keyer_params;
    compositor::GenConfig gen;
    Paths paths;
    EmitToggles emit;

    void validate() const {
        keyer_params.validate();
        gen.validate();
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                       const std::string& context) {
    for (const auto& [key, _] : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(),
                         [&](const char* a) { return key == a; }) == allowed.end()) {
            raise(ErrorKind::Config, "unknown key \"" + key + "\" in " + context);
        }
    }
}

inline void parse_keyer(const nlohmann::json& j, keyer::KeyerParams& p) {
    check_keys(j, {"ramp_low", "ramp_high", "despill", "min_component_area", "matte_threshold"},
               "keyer");
    p.ramp_low = j.value("ramp_low", p.ramp_low);
    p.ramp_high = j.value("ramp_high", p.ramp_high);
    p.despill_enabled = j.value("despill", p.despill_enabled);
    p.min_component_area = j.value("min_component_area", p.min_component_area);
    p.matte_threshold = j.value("matte_threshold", p.matte_threshold);
}

inline void parse_generator(const nlohmann::json& j, compositor::GenConfig& g) {
    check_keys(j,
               {"scale_min", "scale_max", "s_ref", "brightness_floor", "brightness_mode",
                "objects_per_image", "inplane_rotation", "blend", "placement",
                "max_pairwise_overlap_iou", "mask_threshold", "classes", "sampling"},
               "generator");
    g.scale_min = j.value("scale_min", g.scale_min);
    g.scale_max = j.value("scale_max", g.scale_max);
    g.s_ref = j.contains("s_ref") ? j["s_ref"].get<double>() : g.scale_max;
    g.brightness_floor = j.value("brightness_floor", g.brightness_floor);
    if (j.contains("brightness_mode")) {
        std::string mode = j["brightness_mode"].get<std::string>();
        if (mode == "scale") {
            g.brightness_mode = compositor::BrightnessMode::Scale;
        } else if (mode == "depth") {
            g.brightness_mode = compositor::BrightnessMode::Depth;
        } else {
            raise(ErrorKind::Config, "brightness_mode must be \"scale\" or \"depth\"");
        }
    }
    if (j.contains("objects_per_image")) {
        const auto& r = j["objects_per_image"];
        if (!r.is_array() || r.size() != 2) {
            raise(ErrorKind::Config, "objects_per_image must be [min, max]");
        }
        g.objects_min = r.at(0).get<int>();
        g.objects_max = r.at(1).get<int>();
    }
    if (j.contains("inplane_rotation")) {
        std::string rot = j["inplane_rotation"].get<std::string>();
        if (rot == "uniform") {
            g.inplane_rotation = true;
        } else if (rot == "off") {
            g.inplane_rotation = false;
        } else {
            raise(ErrorKind::Config, "inplane_rotation must be \"uniform\" or \"off\"");
        }
    }
    if (j.contains("blend")) {
        const auto& b = j["blend"];
        check_keys(b, {"mode", "sigma", "mixed_gradients", "tol", "max_iter"}, "generator.blend");
        std::string mode = b.at("mode").get<std::string>();
        if (mode == "feather") {
            g.blend = compositor::BlendMode::Feather;
            g.feather_sigma = b.value("sigma", g.feather_sigma);
        } else if (mode == "poisson") {
            g.blend = compositor::BlendMode::Poisson;
            g.poisson.mixed_gradients = b.value("mixed_gradients", g.poisson.mixed_gradients);
            g.poisson.tol = b.value("tol", g.poisson.tol);
            g.poisson.max_iter = b.value("max_iter", g.poisson.max_iter);
        } else {
            raise(ErrorKind::Config, "blend.mode must be \"feather\" or \"poisson\"");
        }
    }
    if (j.contains("placement")) {
        const auto& p = j["placement"];
        check_keys(p, {"mode", "min_visible_fraction"}, "generator.placement");
        std::string mode = p.at("mode").get<std::string>();
        if (mode == "fully_inside") {
            g.placement = compositor::PlacementPolicy::FullyInside;
        } else if (mode == "truncation_allowed") {
            g.placement = compositor::PlacementPolicy::TruncationAllowed;
            g.min_visible_fraction = p.value("min_visible_fraction", g.min_visible_fraction);
        } else {
            raise(ErrorKind::Config,
                  "placement.mode must be \"fully_inside\" or \"truncation_allowed\"");
        }
    }
    g.max_pairwise_overlap_iou = j.value("max_pairwise_overlap_iou", g.max_pairwise_overlap_iou);
    g.mask_threshold = j.value("mask_threshold", g.mask_threshold);
    if (j.contains("classes")) {
        g.classes = j["classes"].get<std::vector<std::string>>();
    }
    if (j.contains("sampling")) {
        std::string s = j["sampling"].get<std::string>();
        if (s == "random") {
            g.strategy.mode = assetlib::SamplingStrategy::Mode::Random;
        } else if (s == "uniform_viewpoint") {
            g.strategy.mode = assetlib::SamplingStrategy::Mode::UniformViewpoint;
        } else {
            raise(ErrorKind::Config, "sampling must be \"random\" or \"uniform_viewpoint\"");
        }
    }
}

}  // namespace detail

inline ToolConfig config_from_json(const nlohmann::json& j) {
    detail::check_keys(j, {"master_seed", "generator", "keyer", "paths", "emit"}, "config root");
    ToolConfig config;
    if (j.contains("master_seed")) {
        config.gen.master_seed = j["master_seed"].get<std::uint64_t>();
    }
    if (j.contains("generator")) detail::parse_generator(j["generator"], config.gen);
    if (j.contains("keyer")) detail::parse_keyer(j["keyer"], config.keyer_params);
    if (j.contains("paths")) {
        detail::check_keys(j["paths"], {"assets", "backgrounds", "output"}, "paths");
        config.paths.assets = j["paths"].value("assets", "");
        config.paths.backgrounds = j["paths"].value("backgrounds", "");
        config.paths.output = j["paths"].value("output", "");
    }
    if (j.contains("emit")) {
        detail::check_keys(j["emit"], {"coco", "yolo", "masks"}, "emit");
        config.emit.coco = j["emit"].value("coco", true);
        config.emit.yolo = j["emit"].value("yolo", true);
        config.emit.masks = j["emit"].value("masks", true);
    }
    config.validate();
    return config;
}

inline ToolConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open config " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Config, std::string("config is not valid JSON: ") + e.what());
    }
    try {
        return config_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Config, std::string("config schema error: ") + e.what());
    }
}

// Canonical snapshot with every knob materialized; this is what the
// manifest stores and hashes, and what replay re-parses.
inline nlohmann::json config_to_json(const ToolConfig& config) {
    const auto& g = config.gen;
    nlohmann::json blend;
    if (g.blend == compositor::BlendMode::Feather) {
        blend = {{"mode", "feather"}, {"sigma", g.feather_sigma}};
    } else {
        blend = {{"mode", "poisson"},
                 {"mixed_gradients", g.poisson.mixed_gradients},
                 {"tol", g.poisson.tol},
                 {"max_iter", g.poisson.max_iter}};
    }
    nlohmann::json placement;
    if (g.placement == compositor::PlacementPolicy::FullyInside) {
        placement = {{"mode", "fully_inside"}};
    } else {
        placement = {{"mode", "truncation_allowed"},
                     {"min_visible_fraction", g.min_visible_fraction}};
    }
    return nlohmann::json{
        {"master_seed", g.master_seed},
        {"generator",
         {{"scale_min", g.scale_min},
          {"scale_max", g.scale_max},
          {"s_ref", g.s_ref},
          {"brightness_floor", g.brightness_floor},
          {"brightness_mode",
           g.brightness_mode == compositor::BrightnessMode::Scale ? "scale" : "depth"},
          {"objects_per_image", {g.objects_min, g.objects_max}},
          {"inplane_rotation", g.inplane_rotation ? "uniform" : "off"},
          {"blend", blend},
          {"placement", placement},
          {"max_pairwise_overlap_iou", g.max_pairwise_overlap_iou},
          {"mask_threshold", g.mask_threshold},
          {"classes", g.classes},
          {"sampling",
           g.strategy.mode == assetlib::SamplingStrategy::Mode::Random ? "random"
                                                                       : "uniform_viewpoint"}}},
        {"keyer",
         {{"ramp_low", config.keyer_params.ramp_low},
          {"ramp_high", config.keyer_params.ramp_high},
          {"despill", config.keyer_params.despill_enabled},
          {"min_component_area", config.keyer_params.min_component_area},
          {"matte_threshold", config.keyer_params.matte_threshold}}},
        {"paths",
         {{"assets", config.paths.assets},
          {"backgrounds", config.paths.backgrounds},
          {"output", config.paths.output}}},
        {"emit", {{"coco", config.emit.coco}, {"yolo", config.emit.yolo},
                  {"masks", config.emit.masks}}}};
}

}  // namespace synthforge::cfg
