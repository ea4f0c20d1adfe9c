#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "synthforge/compositor.hpp"
#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/image_io.hpp"

namespace synthforge::annotate {

namespace fs = std::filesystem;

inline constexpr const char* kToolVersion =
#ifdef SYNTHFORGE_VERSION
    SYNTHFORGE_VERSION;
#else
    "0.0.0";
#endif

// Tight bounding box of the nonzero pixels; empty mask gives an explicit
// empty result rather than a zero box.
inline std::optional<BoxI> bbox_from_mask(const ImageU8& mask) {
    BoxI box;
    bool any = false;
    for (int y = 0; y < mask.height(); ++y) {
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask(x, y)) continue;
            if (!any) {
                box = {x, y, x, y};
                any = true;
            } else {
                box.x0 = std::min(box.x0, x);
                box.y0 = std::min(box.y0, y);
                box.x1 = std::max(box.x1, x);
                box.y1 = std::max(box.y1, y);
            }
        }
    }
    if (!any) return std::nullopt;
    return box;
}

// One instance as carried into the interchange files.
struct InstanceRecord {
    std::string class_label;
    BoxI visible_box;
    BoxI amodal_box;
    long long area = 0;  // visible pixel count
    int mask_value = 0;  // value of this instance in the 16-bit mask PNG
};

struct ImageRecord {
    std::string file_name;
    int width = 0;
    int height = 0;
    std::string mask_file;
    std::vector<InstanceRecord> instances;
};

// 16-bit label raster: 0 = background, instance k (1-based draw order) = k.
inline ImageU16 instance_mask(const compositor::AnnotatedSample& sample) {
    if (sample.instances.size() > 65534) {
        raise(ErrorKind::Capacity, "more than 65,534 instances in one image");
    }
    ImageU16 out(sample.image.width(), sample.image.height(), 1, 0);
    for (std::size_t k = 0; k < sample.instances.size(); ++k) {
        const ImageU8& mask = sample.instances[k].visible_mask;
        for (int y = 0; y < mask.height(); ++y) {
            for (int x = 0; x < mask.width(); ++x) {
                if (mask(x, y)) out(x, y) = static_cast<std::uint16_t>(k + 1);
            }
        }
    }
    return out;
}

inline void emit_mask(const compositor::AnnotatedSample& sample, const std::string& path) {
    save_png16(path, instance_mask(sample));
}

inline ImageRecord make_image_record(const compositor::AnnotatedSample& sample,
                                     const std::string& file_name,
                                     const std::string& mask_file) {
    ImageRecord rec;
    rec.file_name = file_name;
    rec.mask_file = mask_file;
    rec.width = sample.image.width();
    rec.height = sample.image.height();
    for (std::size_t k = 0; k < sample.instances.size(); ++k) {
        const auto& inst = sample.instances[k];
        InstanceRecord ir;
        ir.class_label = inst.class_label;
        ir.visible_box = inst.visible_box;
        ir.amodal_box = inst.amodal_box;
        ir.mask_value = static_cast<int>(k + 1);
        long long area = 0;
        for (int y = 0; y < inst.visible_mask.height(); ++y) {
            for (int x = 0; x < inst.visible_mask.width(); ++x) {
                if (inst.visible_mask(x, y)) ++area;
            }
        }
        ir.area = area;
        rec.instances.push_back(std::move(ir));
    }
    return rec;
}

// Canonical serialization: nlohmann keeps keys sorted; two-space indent and
// a trailing newline so goldens are byte-stable.
inline void write_canonical_json(const nlohmann::json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) raise(ErrorKind::Io, "cannot write " + path);
    out << j.dump(2) << "\n";
}

// COCO-style detection file. Boxes are [x, y, width, height] floats; the
// segmentation polygon is replaced by a mask_file/mask_value extension
// pointing into the 16-bit instance mask.
inline nlohmann::json coco_json(const std::vector<ImageRecord>& records,
                                const std::vector<std::string>& classes) {
    nlohmann::json images = nlohmann::json::array();
    nlohmann::json annotations = nlohmann::json::array();
    nlohmann::json categories = nlohmann::json::array();
    for (std::size_t i = 0; i < classes.size(); ++i) {
        categories.push_back({{"id", i + 1}, {"name", classes[i]}});
    }
    auto category_id = [&](const std::string& name) -> std::size_t {
        for (std::size_t i = 0; i < classes.size(); ++i) {
            if (classes[i] == name) return i + 1;
        }
        raise(ErrorKind::InvalidInput, "class not in vocabulary: " + name);
    };

    long long next_ann_id = 1;
    for (std::size_t i = 0; i < records.size(); ++i) {
        const ImageRecord& rec = records[i];
        long long image_id = static_cast<long long>(i) + 1;
        images.push_back({{"id", image_id},
                          {"file_name", rec.file_name},
                          {"width", rec.width},
                          {"height", rec.height}});
        for (const InstanceRecord& inst : rec.instances) {
            const BoxI& b = inst.visible_box;
            annotations.push_back({{"id", next_ann_id++},
                                   {"image_id", image_id},
                                   {"category_id", category_id(inst.class_label)},
                                   {"bbox",
                                    {static_cast<double>(b.x0), static_cast<double>(b.y0),
                                     static_cast<double>(b.width()),
                                     static_cast<double>(b.height())}},
                                   {"area", inst.area},
                                   {"iscrowd", 0},
                                   {"mask_file", rec.mask_file},
                                   {"mask_value", inst.mask_value}});
        }
    }
    return nlohmann::json{
        {"images", images}, {"annotations", annotations}, {"categories", categories}};
}

inline void emit_coco(const std::vector<ImageRecord>& records,
                      const std::vector<std::string>& classes, const std::string& path) {
    write_canonical_json(coco_json(records, classes), path);
}

// One text line per instance: "class_idx cx cy w h", center/size normalized
// by the image dimensions, six decimals, visible boxes.
inline std::string yolo_lines(const ImageRecord& rec, const std::vector<std::string>& classes) {
    std::string out;
    char buf[160];
    for (const InstanceRecord& inst : rec.instances) {
        std::size_t idx = 0;
        for (; idx < classes.size(); ++idx) {
            if (classes[idx] == inst.class_label) break;
        }
        if (idx == classes.size()) {
            raise(ErrorKind::InvalidInput, "class not in vocabulary: " + inst.class_label);
        }
        const BoxI& b = inst.visible_box;
        double cx = (b.x0 + b.x1 + 1) * 0.5 / rec.width;
        double cy = (b.y0 + b.y1 + 1) * 0.5 / rec.height;
        double w = static_cast<double>(b.width()) / rec.width;
        double h = static_cast<double>(b.height()) / rec.height;
        std::snprintf(buf, sizeof(buf), "%zu %.6f %.6f %.6f %.6f\n", idx, cx, cy, w, h);
        out += buf;
    }
    return out;
}

inline void emit_yolo(const ImageRecord& rec, const std::vector<std::string>& classes,
                      const fs::path& label_path) {
    std::ofstream out(label_path);
    if (!out) raise(ErrorKind::Io, "cannot write " + label_path.string());
    out << yolo_lines(rec, classes);
}

inline void emit_yolo_classes(const std::vector<std::string>& classes, const fs::path& dir) {
    std::ofstream out(dir / "classes.txt");
    if (!out) raise(ErrorKind::Io, "cannot write classes.txt");
    for (const auto& c : classes) out << c << "\n";
}

// --- reproducibility manifest ------------------------------------------

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

inline std::string config_hash(const nlohmann::json& config) {
    return hash_hex(fnv1a64(config.dump()));
}

inline nlohmann::json box_json(const BoxI& b) {
    return nlohmann::json::array({b.x0, b.y0, b.x1, b.y1});
}

inline BoxI box_from_json(const nlohmann::json& j) {
    return BoxI{j.at(0).get<int>(), j.at(1).get<int>(), j.at(2).get<int>(), j.at(3).get<int>()};
}

inline nlohmann::json recipe_json(const compositor::SceneRecipe& recipe) {
    nlohmann::json placements = nlohmann::json::array();
    for (const auto& pl : recipe.placements) {
        nlohmann::json p{{"asset_id", pl.asset_id}, {"class", pl.class_label},
                         {"scale", pl.scale},       {"center", {pl.cx, pl.cy}},
                         {"rotation", pl.rotation}, {"brightness", pl.brightness}};
        p["depth"] = pl.depth ? nlohmann::json(*pl.depth) : nlohmann::json(nullptr);
        placements.push_back(std::move(p));
    }
    return nlohmann::json{{"background", recipe.background_ref},
                          {"seed", recipe.sample_seed},
                          {"dropped_objects", recipe.dropped_objects},
                          {"placements", placements}};
}

inline compositor::SceneRecipe recipe_from_json(const nlohmann::json& j) {
    compositor::SceneRecipe recipe;
    recipe.background_ref = j.at("background").get<std::string>();
    recipe.sample_seed = j.at("seed").get<std::uint64_t>();
    recipe.dropped_objects = j.value("dropped_objects", 0);
    for (const auto& p : j.at("placements")) {
        compositor::Placement pl;
        pl.asset_id = p.at("asset_id").get<std::string>();
        pl.class_label = p.at("class").get<std::string>();
        pl.scale = p.at("scale").get<double>();
        pl.cx = p.at("center").at(0).get<double>();
        pl.cy = p.at("center").at(1).get<double>();
        pl.rotation = p.at("rotation").get<double>();
        pl.brightness = p.at("brightness").get<double>();
        if (!p.at("depth").is_null()) pl.depth = p.at("depth").get<double>();
        recipe.placements.push_back(std::move(pl));
    }
    return recipe;
}

struct SampleRecord {
    std::int64_t sample_index = 0;
    std::string status = "ok";  // "ok" | "failed"
    std::string error;          // set when failed
    std::string image_file;
    std::string mask_file;
    compositor::SceneRecipe recipe;
    std::vector<InstanceRecord> instances;
};

struct DatasetManifest {
    std::uint64_t master_seed = 0;
    nlohmann::json config;  // canonical config snapshot
    std::vector<SampleRecord> samples;
};

inline nlohmann::json manifest_json(const DatasetManifest& manifest) {
    nlohmann::json samples = nlohmann::json::array();
    for (const auto& s : manifest.samples) {
        nlohmann::json instances = nlohmann::json::array();
        for (const auto& inst : s.instances) {
            instances.push_back({{"class", inst.class_label},
                                 {"visible_box", box_json(inst.visible_box)},
                                 {"amodal_box", box_json(inst.amodal_box)},
                                 {"area", inst.area},
                                 {"mask_value", inst.mask_value}});
        }
        nlohmann::json rec{{"sample_index", s.sample_index},
                           {"status", s.status},
                           {"image", s.image_file},
                           {"mask", s.mask_file},
                           {"recipe", recipe_json(s.recipe)},
                           {"instances", instances}};
        if (!s.error.empty()) rec["error"] = s.error;
        samples.push_back(std::move(rec));
    }
    return nlohmann::json{{"tool_version", kToolVersion},
                          {"master_seed", manifest.master_seed},
                          {"config", manifest.config},
                          {"config_hash", config_hash(manifest.config)},
                          {"samples", samples}};
}

inline void emit_manifest(const DatasetManifest& manifest, const std::string& path) {
    write_canonical_json(manifest_json(manifest), path);
}

// Round-trips the manifest; a config snapshot that no longer matches its
// recorded hash is rejected.
inline DatasetManifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open manifest " + path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, std::string("manifest is not valid JSON: ") + e.what());
    }
    DatasetManifest manifest;
    try {
        manifest.master_seed = j.at("master_seed").get<std::uint64_t>();
        manifest.config = j.at("config");
        std::string stored_hash = j.at("config_hash").get<std::string>();
        if (config_hash(manifest.config) != stored_hash) {
            raise(ErrorKind::Integrity, "manifest config hash mismatch");
        }
        for (const auto& s : j.at("samples")) {
            SampleRecord rec;
            rec.sample_index = s.at("sample_index").get<std::int64_t>();
            rec.status = s.at("status").get<std::string>();
            rec.error = s.value("error", "");
            rec.image_file = s.at("image").get<std::string>();
            rec.mask_file = s.at("mask").get<std::string>();
            rec.recipe = recipe_from_json(s.at("recipe"));
            for (const auto& inst : s.at("instances")) {
                InstanceRecord ir;
                ir.class_label = inst.at("class").get<std::string>();
                ir.visible_box = box_from_json(inst.at("visible_box"));
                ir.amodal_box = box_from_json(inst.at("amodal_box"));
                ir.area = inst.at("area").get<long long>();
                ir.mask_value = inst.at("mask_value").get<int>();
                rec.instances.push_back(std::move(ir));
            }
            manifest.samples.push_back(std::move(rec));
        }
    } catch (const nlohmann::json::exception& e) {
        raise(ErrorKind::Format, std::string("manifest schema error: ") + e.what());
    }
    return manifest;
}

}  // namespace synthforge::annotate
