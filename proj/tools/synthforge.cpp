// synthforge: batch toolkit that turns green-screen object footage (plus
// optional motion-capture pose tracks) into composited, fully annotated
// detection/segmentation training data, with the subset-sampling and
// evaluation machinery to measure transfer.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "synthforge/annotate.hpp"
#include "synthforge/assetlib.hpp"
#include "synthforge/compositor.hpp"
#include "synthforge/config.hpp"
#include "synthforge/error.hpp"
#include "synthforge/image_io.hpp"
#include "synthforge/keyer.hpp"
#include "synthforge/log.hpp"
#include "synthforge/metrics.hpp"
#include "synthforge/mocap.hpp"
#include "synthforge/pipeline.hpp"
#include "synthforge/sampler.hpp"

namespace fs = std::filesystem;
using namespace synthforge;

namespace {

// Exit-code contract: 0 ok, 2 config error, 3 I/O, 4 empty result,
// 5 degenerate input.
int exit_code_for(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Io:
        case ErrorKind::Integrity:
            return 3;
        case ErrorKind::NotFound:
        case ErrorKind::EmptyForeground:
        case ErrorKind::GenerationFailure:
            return 4;
        case ErrorKind::DegenerateSignal:
        case ErrorKind::DegenerateGeometry:
        case ErrorKind::DegenerateTransform:
        case ErrorKind::InsufficientData:
        case ErrorKind::RegionOutOfBounds:
            return 5;
        default:
            return 2;
    }
}

std::vector<fs::path> list_frames(const fs::path& dir) {
    if (!fs::exists(dir) || !fs::is_directory(dir)) {
        raise(ErrorKind::Io, "frame directory not found: " + dir.string());
    }
    std::vector<fs::path> frames;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".png") {
            frames.push_back(entry.path());
        }
    }
    std::sort(frames.begin(), frames.end());
    if (frames.empty()) raise(ErrorKind::Io, "no PNG frames in " + dir.string());
    return frames;
}

struct KeyArgs {
    std::string frames_dir;
    std::string out_lib;
    std::string class_name;
    std::string object_pose_csv;
    std::string camera_pose_csv;
    double offset_s = 0;
    bool offset_given = false;
    double fps = 30.0;
    std::string config_path;
};

int run_key(const KeyArgs& args) {
    keyer::KeyerParams params;
    if (!args.config_path.empty()) params = cfg::load_config(args.config_path).keyer_params;

    std::optional<mocap::PoseTrack> camera_track, object_track;
    if (!args.object_pose_csv.empty() || !args.camera_pose_csv.empty()) {
        if (args.object_pose_csv.empty() || args.camera_pose_csv.empty() || !args.offset_given) {
            raise(ErrorKind::Config, "--pose, --camera and --offset must be given together");
        }
        object_track = mocap::parse_pose_track(args.object_pose_csv, mocap::Subject::Object);
        camera_track = mocap::parse_pose_track(args.camera_pose_csv, mocap::Subject::Camera);
    }

    std::vector<fs::path> frames = list_frames(args.frames_dir);
    const std::string video_tag = fs::path(args.frames_dir).filename().string();
    long long extracted = 0, skipped = 0, posed = 0;
    for (std::size_t k = 0; k < frames.size(); ++k) {
        ImageF frame = load_image(frames[k].string(), 3);
        ForegroundAsset asset;
        try {
            std::optional<mocap::Pose> rel;
            if (camera_track) {
                double t_mocap = static_cast<double>(k) / args.fps + args.offset_s;
                try {
                    mocap::Pose cam = mocap::interpolate_pose(*camera_track, t_mocap);
                    mocap::Pose obj = mocap::interpolate_pose(*object_track, t_mocap);
                    rel = mocap::relative_pose(cam, obj);
                } catch (const Error&) {
                    log_warn("frame " + std::to_string(k) + ": no pose at t=" +
                             std::to_string(t_mocap) + ", stored without view");
                }
            }
            asset = keyer::extract_asset(frame, params, args.class_name, rel);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::EmptyForeground) {
                ++skipped;
                continue;
            }
            throw;
        }
        if (asset.view) {
            asset.view->frame_index = static_cast<std::int64_t>(k);
            ++posed;
        }
        asset.id = video_tag + "_" + frames[k].stem().string();
        asset.source = {video_tag, static_cast<std::int64_t>(k)};
        assetlib::store_asset(args.out_lib, asset);
        ++extracted;
    }
    std::printf("extracted=%lld skipped=%lld posed=%lld\n", extracted, skipped, posed);
    if (extracted == 0) return 4;
    return 0;
}

struct SyncArgs {
    std::string pose_csv;
    std::string frames_dir;
    double fps = 0;
    double window_s = 10.0;
};

int run_sync(const SyncArgs& args) {
    if (args.fps <= 0) raise(ErrorKind::Config, "--fps must be positive");
    mocap::PoseTrack track = mocap::parse_pose_track(args.pose_csv, mocap::Subject::Camera);
    mocap::Signal mocap_signal = mocap::angular_speed_signal(track, track.rate);

    std::vector<fs::path> frames = list_frames(args.frames_dir);
    std::vector<std::string> paths;
    paths.reserve(frames.size());
    for (const auto& f : frames) paths.push_back(f.string());
    mocap::Signal video_signal{mocap::frame_motion_signal(paths), args.fps};

    mocap::SyncResult result = mocap::sync_offset(mocap_signal, video_signal, args.window_s);
    // report on the track's own clock so the offset feeds straight into
    // `key --offset`
    double offset = result.offset_s + track.samples.front().t;
    nlohmann::json out{{"offset_s", offset},
                       {"peak_correlation", result.peak_correlation},
                       {"common_rate_hz", result.common_rate_hz}};
    std::cout << out.dump() << "\n";
    return 0;
}

struct StatsArgs {
    std::string lib;
    std::string class_name;
    std::string out_png;
    int cell_px = 8;
};

int run_stats(const StatsArgs& args) {
    assetlib::AssetLibrary lib = assetlib::load_library(args.lib);
    assetlib::SphereHistogram hist = assetlib::viewing_histogram(lib, args.class_name);
    assetlib::export_heatmap(hist, args.out_png, args.cell_px);
    std::printf("assets=%lld unposed=%lld bins=%dx%d\n", hist.total() + hist.excluded_unposed,
                hist.excluded_unposed, hist.n_az, hist.n_el);
    return 0;
}

struct GenerateArgs {
    std::string config_path;
    long long count = 0;
    std::string out_dir;
    int jobs = 0;
    std::string replay;
};

int run_generate(const GenerateArgs& args) {
    cfg::ToolConfig config;
    if (args.replay.empty()) {
        if (args.config_path.empty()) {
            raise(ErrorKind::Config, "--config is required unless --replay is given");
        }
        config = cfg::load_config(args.config_path);
    }
    pipeline::GenerateOptions opts;
    opts.out_dir = args.out_dir;
    opts.count = args.count;
    opts.jobs = args.jobs;
    if (!args.replay.empty()) opts.replay_manifest = args.replay;

    pipeline::GenerateStats stats = pipeline::generate_dataset(config, opts);
    std::printf("succeeded=%lld failed=%lld\n", stats.succeeded, stats.failed);
    long long total = stats.succeeded + stats.failed;
    if (total > 0 && stats.succeeded * 100 < total * 99) return 4;
    return 0;
}

struct NshotArgs {
    std::string coco_in;
    long long n = 0;
    std::uint64_t seed = 0;
    std::string out;
};

int run_nshot(const NshotArgs& args) {
    sampler::LabeledSet set = sampler::load_labeled_set(args.coco_in);
    RngStream rng(args.seed);
    sampler::LabeledSet subset = sampler::select_nshot(set, args.n, rng);
    annotate::write_canonical_json(sampler::labeled_set_to_coco(subset), args.out);
    std::printf("images=%zu\n", subset.images.size());
    return 0;
}

struct SplitArgs {
    std::string coco_in;
    std::string ratio = "5:1";
    std::uint64_t seed = 0;
    std::string out_train;
    std::string out_val;
};

int run_split(const SplitArgs& args) {
    int rt = 0, rv = 0;
    if (std::sscanf(args.ratio.c_str(), "%d:%d", &rt, &rv) != 2 || rt <= 0 || rv <= 0) {
        raise(ErrorKind::Config, "--ratio must look like 5:1");
    }
    sampler::LabeledSet set = sampler::load_labeled_set(args.coco_in);
    RngStream rng(args.seed);
    auto [train, val] = sampler::split(set, rt, rv, rng);
    annotate::write_canonical_json(sampler::labeled_set_to_coco(train), args.out_train);
    annotate::write_canonical_json(sampler::labeled_set_to_coco(val), args.out_val);
    std::printf("train=%zu val=%zu\n", train.images.size(), val.images.size());
    return 0;
}

struct EvalArgs {
    std::string pred;
    std::string gt;
    double iou = 0.5;
    double conf = 0.5;
    bool seg = false;
    std::string json_out;
};

ImageU8 load_binary_mask(const std::string& path) {
    DecodedPng decoded = load_png(path);
    int w, h;
    ImageU8 out;
    if (decoded.bit_depth == 16) {
        w = decoded.u16.width();
        h = decoded.u16.height();
        out = ImageU8(w, h, 1, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) out(x, y) = decoded.u16(x, y, 0) != 0;
        }
    } else {
        w = decoded.u8.width();
        h = decoded.u8.height();
        out = ImageU8(w, h, 1, 0);
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x < w; ++x) out(x, y) = decoded.u8(x, y, 0) != 0;
        }
    }
    return out;
}

int run_eval(const EvalArgs& args) {
    if (args.seg) {
        // masks: either two PNG files or two directories paired by filename
        long long tp = 0, fp = 0, fn = 0, tn = 0;
        auto accumulate = [&](const std::string& pred_path, const std::string& gt_path) {
            metrics::SegReport r =
                metrics::evaluate_segmentation(load_binary_mask(pred_path),
                                               load_binary_mask(gt_path));
            tp += r.tp;
            fp += r.fp;
            fn += r.fn;
            tn += r.tn;
        };
        if (fs::is_directory(args.pred)) {
            if (!fs::is_directory(args.gt)) {
                raise(ErrorKind::Config, "--seg with a prediction directory needs a gt directory");
            }
            std::vector<fs::path> preds;
            for (const auto& e : fs::directory_iterator(args.pred)) {
                if (e.path().extension() == ".png") preds.push_back(e.path());
            }
            std::sort(preds.begin(), preds.end());
            if (preds.empty()) raise(ErrorKind::Io, "no masks in " + args.pred);
            for (const auto& p : preds) {
                fs::path gt_path = fs::path(args.gt) / p.filename();
                if (!fs::exists(gt_path)) {
                    raise(ErrorKind::Io, "missing ground-truth mask " + gt_path.string());
                }
                accumulate(p.string(), gt_path.string());
            }
        } else {
            accumulate(args.pred, args.gt);
        }
        metrics::SegReport report = metrics::segmentation_report_from_counts(tp, fp, fn, tn);
        std::cout << metrics::format_table(report);
        if (!args.json_out.empty()) {
            annotate::write_canonical_json(metrics::report_json(report), args.json_out);
        }
        return 0;
    }

    sampler::LabeledSet gts = sampler::load_labeled_set(args.gt);
    std::vector<metrics::Detection> preds =
        fs::is_directory(args.pred) ? metrics::load_predictions_yolo(args.pred, gts)
                                    : metrics::load_predictions_jsonl(args.pred);
    metrics::EvalReport report = metrics::evaluate_detection(preds, gts, args.iou, args.conf);
    std::cout << metrics::format_table(report);
    if (!args.json_out.empty()) {
        annotate::write_canonical_json(metrics::report_json(report), args.json_out);
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"synthforge: green-screen footage to annotated synthetic training data"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(annotate::kToolVersion));

    KeyArgs key_args;
    auto* key = app.add_subcommand("key", "Extract keyed RGBA assets from green-screen frames");
    key->add_option("--frames", key_args.frames_dir, "Directory of PNG frames")->required();
    key->add_option("--out", key_args.out_lib, "Asset library root")->required();
    key->add_option("--class", key_args.class_name, "Class label for extracted assets")
        ->required();
    key->add_option("--pose", key_args.object_pose_csv, "Object pose track CSV");
    key->add_option("--camera", key_args.camera_pose_csv, "Camera pose track CSV");
    key->add_option("--offset", key_args.offset_s,
                    "Sync offset in seconds (mocap time minus video time)")
        ->each([&](const std::string&) { key_args.offset_given = true; });
    key->add_option("--fps", key_args.fps, "Video frame rate for pose lookup (default 30)");
    key->add_option("--config", key_args.config_path, "JSON config carrying keyer parameters");

    SyncArgs sync_args;
    auto* sync = app.add_subcommand(
        "sync", "Recover the mocap/video time offset from the start-of-video camera rotation");
    sync->add_option("--pose", sync_args.pose_csv, "Camera pose track CSV")->required();
    sync->add_option("--frames", sync_args.frames_dir, "Directory of PNG frames")->required();
    sync->add_option("--fps", sync_args.fps, "Video frame rate")->required();
    sync->add_option("--window", sync_args.window_s, "Search window in seconds (default 10)");

    StatsArgs stats_args;
    auto* stats = app.add_subcommand("stats", "Export the viewing-angle density heatmap");
    stats->add_option("--lib", stats_args.lib, "Asset library root")->required();
    stats->add_option("--class", stats_args.class_name, "Class to inspect")->required();
    stats->add_option("--out", stats_args.out_png, "Output heatmap PNG")->required();
    stats->add_option("--cell", stats_args.cell_px, "Pixels per bin (default 8)");

    GenerateArgs gen_args;
    auto* gen = app.add_subcommand("generate", "Render an annotated synthetic dataset");
    gen->add_option("--config", gen_args.config_path, "JSON config file");
    gen->add_option("--count", gen_args.count, "Number of samples to render");
    gen->add_option("--out", gen_args.out_dir, "Output dataset directory")->required();
    gen->add_option("--jobs", gen_args.jobs, "Worker threads (default: cores)");
    gen->add_option("--replay", gen_args.replay, "Re-render byte-identically from a manifest");

    NshotArgs nshot_args;
    auto* nshot = app.add_subcommand(
        "nshot", "Select a subset with at least N instances of every class");
    nshot->add_option("--coco", nshot_args.coco_in, "Input COCO JSON")->required();
    nshot->add_option("--n", nshot_args.n, "Instances required per class")->required();
    nshot->add_option("--seed", nshot_args.seed, "RNG seed");
    nshot->add_option("--out", nshot_args.out, "Output COCO JSON")->required();

    SplitArgs split_args;
    auto* split = app.add_subcommand("split", "Random train/val split at a given ratio");
    split->add_option("--coco", split_args.coco_in, "Input COCO JSON")->required();
    split->add_option("--ratio", split_args.ratio, "train:val ratio (default 5:1)");
    split->add_option("--seed", split_args.seed, "RNG seed");
    split->add_option("--out-train", split_args.out_train, "Output training COCO JSON")
        ->required();
    split->add_option("--out-val", split_args.out_val, "Output validation COCO JSON")->required();

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Score detections or segmentation masks");
    eval->add_option("--pred", eval_args.pred,
                     "Predictions: JSONL file or YOLO-label directory; mask PNG/dir with --seg")
        ->required();
    eval->add_option("--gt", eval_args.gt, "Ground truth: COCO JSON, or mask PNG/dir with --seg")
        ->required();
    eval->add_option("--iou", eval_args.iou, "IoU threshold (default 0.5)");
    eval->add_option("--conf", eval_args.conf, "Confidence threshold for P/R/F1 (default 0.5)");
    eval->add_flag("--seg", eval_args.seg, "Segmentation mode (pixelwise mask comparison)");
    eval->add_option("--json", eval_args.json_out, "Also write the report as canonical JSON");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (key->parsed()) return run_key(key_args);
        if (sync->parsed()) return run_sync(sync_args);
        if (stats->parsed()) return run_stats(stats_args);
        if (gen->parsed()) return run_generate(gen_args);
        if (nshot->parsed()) return run_nshot(nshot_args);
        if (split->parsed()) return run_split(split_args);
        if (eval->parsed()) return run_eval(eval_args);
    } catch (const Error& e) {
        log_error(e.what());
        return exit_code_for(e.kind());
    } catch (const std::exception& e) {
        log_error(e.what());
        return 1;
    }
    return 0;
}
