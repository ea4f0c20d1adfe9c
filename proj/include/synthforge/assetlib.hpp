#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "synthforge/asset.hpp"
#include "synthforge/error.hpp"
#include "synthforge/image_io.hpp"
#include "synthforge/log.hpp"
#include "synthforge/rng.hpp"

namespace synthforge::assetlib {

namespace fs = std::filesystem;

// Equal-area sphere binning: azimuth in equal arcs, elevation in equal
// sin-latitude slabs. Every bin covers exactly 4*pi/(n_az*n_el) steradians.
struct SphereHistogram {
    int n_az = 36;
    int n_el = 18;
    std::vector<long long> counts;  // n_az * n_el, row = elevation slab
    long long excluded_unposed = 0;

    SphereHistogram() : counts(static_cast<std::size_t>(n_az) * n_el, 0) {}
    SphereHistogram(int az, int el)
        : n_az(az), n_el(el), counts(static_cast<std::size_t>(az) * el, 0) {
        if (az <= 0 || el <= 0) raise(ErrorKind::InvalidInput, "histogram bins must be positive");
    }

    long long& at(int iaz, int iel) { return counts[static_cast<std::size_t>(iel) * n_az + iaz]; }
    long long at(int iaz, int iel) const {
        return counts[static_cast<std::size_t>(iel) * n_az + iaz];
    }

    double bin_area() const { return 4.0 * M_PI / (static_cast<double>(n_az) * n_el); }

    long long total() const {
        long long t = 0;
        for (long long c : counts) t += c;
        return t;
    }
};

inline int azimuth_bin(double vx, double vy, int n_az) {
    double az = std::atan2(vy, vx);  // [-pi, pi]
    double u = (az + M_PI) / (2.0 * M_PI);
    int ia = static_cast<int>(std::floor(u * n_az));
    return std::min(std::max(ia, 0), n_az - 1);
}

inline int elevation_bin(double vz, int n_el) {
    double z = std::min(1.0, std::max(-1.0, vz));
    int iz = static_cast<int>(std::floor((z + 1.0) * 0.5 * n_el));
    return std::min(std::max(iz, 0), n_el - 1);
}

inline int direction_bin(const mocap::Vec3& v, int n_az, int n_el) {
    return elevation_bin(v.z, n_el) * n_az + azimuth_bin(v.x, v.y, n_az);
}

struct SamplingStrategy {
    enum class Mode { Random, UniformViewpoint };
    Mode mode = Mode::Random;
    int n_az = 36;
    int n_el = 18;
};

struct AssetLibrary {
    std::vector<ForegroundAsset> assets;
    std::map<std::string, std::vector<std::size_t>> by_class;
    std::map<std::string, std::size_t> by_id;
    int skipped = 0;  // malformed entries encountered during load

    std::vector<std::string> classes() const {
        std::vector<std::string> out;
        out.reserve(by_class.size());
        for (const auto& [name, _] : by_class) out.push_back(name);
        return out;
    }

    const ForegroundAsset& by_id_or_throw(const std::string& id) const {
        auto it = by_id.find(id);
        if (it == by_id.end()) raise(ErrorKind::NotFound, "asset id " + id);
        return assets[it->second];
    }
};

namespace detail {

inline std::string random_id() {
    static const char* hex = "0123456789abcdef";
    std::random_device rd;
    std::string id(16, '0');
    for (char& c : id) c = hex[rd() % 16];
    return id;
}

inline nlohmann::json sidecar_json(const ForegroundAsset& asset) {
    nlohmann::json j;
    j["id"] = asset.id;
    j["class"] = asset.class_label;
    if (asset.view) {
        j["view"] = {{"v", {asset.view->v.x, asset.view->v.y, asset.view->v.z}},
                     {"depth_m", asset.view->depth}};
    } else {
        j["view"] = nullptr;
    }
    j["source"] = {{"video", asset.source.video}, {"frame", asset.source.frame}};
    return j;
}

}  // namespace detail

// Writes <root>/<class>/<id>.png plus the metadata sidecar. An empty id is
// auto-generated; collisions regenerate. Explicit ids overwrite, which is
// what keeps re-runs of the extraction pipeline idempotent.
inline std::string store_asset(const fs::path& library_root, const ForegroundAsset& asset) {
    if (asset.class_label.empty()) {
        raise(ErrorKind::InvalidInput, "asset class label must be non-empty");
    }
    if (asset.rgba.channels() != 4 || asset.rgba.empty()) {
        raise(ErrorKind::InvalidInput, "asset raster must be non-empty RGBA");
    }
    fs::path dir = library_root / asset.class_label;
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) raise(ErrorKind::Io, "cannot create " + dir.string() + ": " + ec.message());

    std::string id = asset.id;
    if (id.empty()) {
        do {
            id = detail::random_id();
        } while (fs::exists(dir / (id + ".png")));
    }

    ForegroundAsset stored = asset;
    stored.id = id;
    save_png((dir / (id + ".png")).string(), asset.rgba);
    std::ofstream meta(dir / (id + ".json"));
    if (!meta) raise(ErrorKind::Io, "cannot write sidecar for " + id);
    meta << detail::sidecar_json(stored).dump(2) << "\n";
    return id;
}

// Indexes every class/<id>.png under root. A missing sidecar degrades to
// view = none; a malformed sidecar or unreadable PNG skips the entry.
inline AssetLibrary load_library(const fs::path& root) {
    if (!fs::exists(root) || !fs::is_directory(root)) {
        raise(ErrorKind::Io, "asset library root not found: " + root.string());
    }
    AssetLibrary lib;
    std::vector<fs::path> class_dirs;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (entry.is_directory()) class_dirs.push_back(entry.path());
    }
    std::sort(class_dirs.begin(), class_dirs.end());
    for (const auto& dir : class_dirs) {
        std::vector<fs::path> pngs;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (entry.path().extension() == ".png") pngs.push_back(entry.path());
        }
        std::sort(pngs.begin(), pngs.end());
        for (const auto& png_path : pngs) {
            ForegroundAsset asset;
            asset.id = png_path.stem().string();
            asset.class_label = dir.filename().string();
            try {
                DecodedPng decoded = load_png(png_path.string());
                if (decoded.bit_depth != 8 || decoded.u8.channels() != 4) {
                    log_warn("skipping non-RGBA asset " + png_path.string());
                    ++lib.skipped;
                    continue;
                }
                asset.rgba = std::move(decoded.u8);
            } catch (const Error&) {
                log_warn("skipping unreadable asset " + png_path.string());
                ++lib.skipped;
                continue;
            }
            fs::path sidecar = png_path;
            sidecar.replace_extension(".json");
            if (fs::exists(sidecar)) {
                try {
                    std::ifstream in(sidecar);
                    nlohmann::json j = nlohmann::json::parse(in);
                    if (j.contains("view") && !j["view"].is_null()) {
                        mocap::ViewSample vs;
                        auto v = j["view"]["v"];
                        vs.v = {v.at(0).get<double>(), v.at(1).get<double>(),
                                v.at(2).get<double>()};
                        vs.depth = j["view"]["depth_m"].get<double>();
                        vs.frame_index = j.value("/source/frame"_json_pointer, 0);
                        asset.view = vs;
                    }
                    if (j.contains("source")) {
                        asset.source.video = j["source"].value("video", "");
                        asset.source.frame = j["source"].value("frame", 0);
                    }
                } catch (const nlohmann::json::exception&) {
                    log_warn("skipping asset with malformed sidecar " + png_path.string());
                    ++lib.skipped;
                    continue;
                }
            }
            std::size_t index = lib.assets.size();
            lib.assets.push_back(std::move(asset));
            lib.by_class[lib.assets[index].class_label].push_back(index);
            lib.by_id[lib.assets[index].id] = index;
        }
    }
    return lib;
}

// Density of viewing directions over the sphere for one class. Assets
// without a pose are excluded and counted.
inline SphereHistogram viewing_histogram(const AssetLibrary& lib, const std::string& class_label,
                                         int n_az = 36, int n_el = 18) {
    auto it = lib.by_class.find(class_label);
    if (it == lib.by_class.end()) raise(ErrorKind::NotFound, "unknown class " + class_label);
    SphereHistogram hist(n_az, n_el);
    for (std::size_t idx : it->second) {
        const auto& asset = lib.assets[idx];
        if (!asset.view) {
            ++hist.excluded_unposed;
            continue;
        }
        ++hist.counts[direction_bin(asset.view->v, n_az, n_el)];
    }
    return hist;
}

// Random mode: uniform over the class. UniformViewpoint mode: uniform over
// occupied viewing-direction bins, then uniform within the bin, which
// flattens viewpoint density.
inline const ForegroundAsset& sample_asset(const AssetLibrary& lib, const std::string& class_label,
                                           const SamplingStrategy& strategy, RngStream& rng) {
    auto it = lib.by_class.find(class_label);
    if (it == lib.by_class.end() || it->second.empty()) {
        raise(ErrorKind::NotFound, "class empty or unknown: " + class_label);
    }
    const auto& indices = it->second;
    if (strategy.mode == SamplingStrategy::Mode::Random) {
        return lib.assets[indices[rng.uniform_int(indices.size())]];
    }

    std::map<int, std::vector<std::size_t>> bins;
    for (std::size_t idx : indices) {
        const auto& asset = lib.assets[idx];
        if (!asset.view) continue;
        bins[direction_bin(asset.view->v, strategy.n_az, strategy.n_el)].push_back(idx);
    }
    if (bins.empty()) {
        raise(ErrorKind::StrategyUnavailable,
              "UniformViewpoint needs at least one posed asset in " + class_label);
    }
    auto bin_it = bins.begin();
    std::advance(bin_it, static_cast<long>(rng.uniform_int(bins.size())));
    const auto& members = bin_it->second;
    return lib.assets[members[rng.uniform_int(members.size())]];
}

// Equirectangular density image: rows are sin-latitude slabs (top slab
// first), columns azimuth arcs; intensity max-normalized with half-up
// rounding.
inline ImageU8 heatmap_image(const SphereHistogram& hist, int cell_px = 8) {
    if (cell_px <= 0) raise(ErrorKind::InvalidInput, "cell size must be positive");
    long long max_count = 0;
    for (long long c : hist.counts) max_count = std::max(max_count, c);
    ImageU8 img(hist.n_az * cell_px, hist.n_el * cell_px, 1);
    for (int iel = 0; iel < hist.n_el; ++iel) {
        for (int iaz = 0; iaz < hist.n_az; ++iaz) {
            std::uint8_t value = 0;
            if (max_count > 0) {
                double frac = static_cast<double>(hist.at(iaz, iel)) / max_count;
                value = static_cast<std::uint8_t>(std::floor(frac * 255.0 + 0.5));
            }
            int row = (hist.n_el - 1 - iel) * cell_px;  // top slab first
            for (int dy = 0; dy < cell_px; ++dy) {
                for (int dx = 0; dx < cell_px; ++dx) {
                    img(iaz * cell_px + dx, row + dy) = value;
                }
            }
        }
    }
    return img;
}

inline void export_heatmap(const SphereHistogram& hist, const std::string& path, int cell_px = 8) {
    save_png(path, heatmap_image(hist, cell_px));
}

}  // namespace synthforge::assetlib
