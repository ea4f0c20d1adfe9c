#pragma once

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "synthforge/annotate.hpp"
#include "synthforge/assetlib.hpp"
#include "synthforge/compositor.hpp"
#include "synthforge/config.hpp"
#include "synthforge/image_io.hpp"
#include "synthforge/log.hpp"

namespace synthforge::pipeline {

namespace fs = std::filesystem;

struct GenerateOptions {
    fs::path out_dir;
    long long count = 0;
    int jobs = 0;  // 0 = hardware concurrency
    std::optional<std::string> replay_manifest;
};

struct GenerateStats {
    long long succeeded = 0;
    long long failed = 0;
};

namespace detail {

inline std::string sample_stem(long long index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%08lld", index);
    return buf;
}

inline bool is_image_file(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    return ext == ".png" || ext == ".jpg" || ext == ".jpeg";
}

// Read-only, bounded decode cache shared by the render workers. Pixel data
// is immutable, so caching cannot affect output determinism.
class BackgroundCache {
public:
    BackgroundCache(fs::path dir, std::size_t capacity = 64)
        : dir_(std::move(dir)), capacity_(capacity) {}

    std::shared_ptr<const ImageF> get(const std::string& name) {
        std::lock_guard<std::mutex> lock(mutex_);
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        auto img = std::make_shared<ImageF>(load_image((dir_ / name).string(), 3));
        if (cache_.size() >= capacity_) cache_.clear();
        cache_[name] = img;
        return img;
    }

private:
    fs::path dir_;
    std::size_t capacity_;
    std::mutex mutex_;
    std::unordered_map<std::string, std::shared_ptr<const ImageF>> cache_;
};

inline std::vector<compositor::BackgroundRef> scan_backgrounds(const fs::path& dir) {
    if (!fs::exists(dir) || !fs::is_directory(dir)) {
        raise(ErrorKind::Io, "background directory not found: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<compositor::BackgroundRef> refs;
    for (const auto& f : files) {
        // decode only the header-equivalent: dimensions come from a full
        // decode here; backgrounds are scanned once per run
        ImageF img = load_image(f.string(), 3);
        refs.push_back({f.filename().string(), img.width(), img.height()});
    }
    if (refs.empty()) raise(ErrorKind::Io, "no usable backgrounds in " + dir.string());
    return refs;
}

}  // namespace detail

// Renders `count` samples into out_dir (images/, masks/, labels/, coco.json,
// manifest.json). Parallel over sample indices; every sample derives its rng
// stream from (master_seed, sample_index), so output bytes are identical for
// any worker count. In replay mode the recipes come from an existing
// manifest instead of being sampled.
inline GenerateStats generate_dataset(cfg::ToolConfig config, const GenerateOptions& opts) {
    std::optional<annotate::DatasetManifest> replay;
    if (opts.replay_manifest) {
        replay = annotate::load_manifest(*opts.replay_manifest);
        config = cfg::config_from_json(replay->config);
    }
    config.validate();
    if (config.paths.assets.empty() || config.paths.backgrounds.empty()) {
        raise(ErrorKind::Config, "paths.assets and paths.backgrounds are required");
    }

    // Everything that can fail from configuration happens before any output
    // directory is created.
    assetlib::AssetLibrary library = assetlib::load_library(config.paths.assets);
    if (library.assets.empty()) raise(ErrorKind::Config, "asset library is empty");
    std::vector<compositor::BackgroundRef> backgrounds =
        detail::scan_backgrounds(config.paths.backgrounds);
    std::vector<std::string> classes =
        config.gen.classes.empty() ? library.classes() : config.gen.classes;
    for (const auto& cls : classes) {
        if (library.by_class.find(cls) == library.by_class.end()) {
            raise(ErrorKind::Config, "configured class not present in library: " + cls);
        }
    }

    long long count = opts.count;
    if (replay) count = static_cast<long long>(replay->samples.size());

    std::error_code ec;
    fs::create_directories(opts.out_dir / "images", ec);
    if (!ec && config.emit.masks) fs::create_directories(opts.out_dir / "masks", ec);
    if (!ec && config.emit.yolo) fs::create_directories(opts.out_dir / "labels", ec);
    if (ec) raise(ErrorKind::Io, "cannot create output directories: " + ec.message());

    detail::BackgroundCache cache(config.paths.backgrounds);
    std::vector<annotate::SampleRecord> records(static_cast<std::size_t>(count));
    std::vector<std::optional<annotate::ImageRecord>> image_records(
        static_cast<std::size_t>(count));

    std::atomic<long long> next{0};
    auto worker = [&] {
        for (;;) {
            long long index = next.fetch_add(1);
            if (index >= count) return;
            annotate::SampleRecord& rec = records[static_cast<std::size_t>(index)];
            rec.sample_index = index;
            try {
                compositor::SceneRecipe recipe =
                    replay ? replay->samples[static_cast<std::size_t>(index)].recipe
                           : compositor::sample_recipe(config.gen, backgrounds, library,
                                                       static_cast<std::uint64_t>(index));
                std::shared_ptr<const ImageF> bg = cache.get(recipe.background_ref);
                compositor::AnnotatedSample sample =
                    compositor::render(recipe, config.gen, library, *bg);

                std::string stem = detail::sample_stem(index);
                std::string image_rel = "images/" + stem + ".png";
                std::string mask_rel = config.emit.masks ? "masks/" + stem + ".png" : "";
                save_png((opts.out_dir / image_rel).string(), to_u8(sample.image));
                if (config.emit.masks) {
                    annotate::emit_mask(sample, (opts.out_dir / mask_rel).string());
                }
                annotate::ImageRecord img_rec =
                    annotate::make_image_record(sample, image_rel, mask_rel);
                if (config.emit.yolo) {
                    annotate::emit_yolo(img_rec, classes, opts.out_dir / "labels" / (stem + ".txt"));
                }
                rec.status = "ok";
                rec.image_file = image_rel;
                rec.mask_file = mask_rel;
                rec.recipe = recipe;
                rec.instances = img_rec.instances;
                image_records[static_cast<std::size_t>(index)] = std::move(img_rec);
            } catch (const std::exception& e) {
                rec.status = "failed";
                rec.error = e.what();
                log_warn("sample " + std::to_string(index) + " failed: " + rec.error);
            }
        }
    };

    int jobs = opts.jobs > 0 ? opts.jobs
                             : std::max(1u, std::thread::hardware_concurrency());
    std::vector<std::thread> threads;
    for (int t = 0; t < jobs; ++t) threads.emplace_back(worker);
    for (auto& t : threads) t.join();

    if (config.emit.yolo) annotate::emit_yolo_classes(classes, opts.out_dir / "labels");
    if (config.emit.coco) {
        std::vector<annotate::ImageRecord> ok_records;
        for (auto& r : image_records) {
            if (r) ok_records.push_back(std::move(*r));
        }
        annotate::emit_coco(ok_records, classes, (opts.out_dir / "coco.json").string());
    }

    annotate::DatasetManifest manifest;
    manifest.master_seed = config.gen.master_seed;
    manifest.config = cfg::config_to_json(config);
    manifest.samples = std::move(records);
    annotate::emit_manifest(manifest, (opts.out_dir / "manifest.json").string());

    GenerateStats stats;
    for (const auto& r : manifest.samples) {
        if (r.status == "ok") {
            ++stats.succeeded;
        } else {
            ++stats.failed;
        }
    }
    return stats;
}

}  // namespace synthforge::pipeline
