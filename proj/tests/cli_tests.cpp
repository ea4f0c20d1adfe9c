// Integration tests that drive the installed binary the way a user would.

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <map>
#include <sstream>
#include <sys/wait.h>

#include <json.hpp>

#include "synthforge/assetlib.hpp"
#include "synthforge/image_io.hpp"
#include "synthforge/mocap.hpp"
#include "synthforge/sampler.hpp"
#include "testutil.hpp"

using namespace synthforge;
namespace fs = std::filesystem;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string out;
};

RunResult run_cli(const std::string& args, const fs::path& scratch) {
    fs::path out_file = scratch / ("cli_out_" + std::to_string(std::rand()) + ".txt");
    std::string cmd = std::string(SYNTHFORGE_CLI_PATH) + " " + args + " > " +
                      out_file.string() + " 2>/dev/null";
    int status = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    r.out = testutil::slurp(out_file);
    return r;
}

void write_frames(const fs::path& dir, bool with_object) {
    fs::create_directories(dir);
    for (int k = 0; k < 3; ++k) {
        ImageF frame = testutil::green_canvas(96, 96);
        if (with_object) {
            testutil::paste(frame, testutil::solid_rgb(20, 20, 0.5f, 0.45f, 0.5f), 30 + 4 * k, 30);
        }
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.png", k);
        save_png((dir / name).string(), to_u8(frame));
    }
}

void write_pose_csv(const fs::path& path, double t0, double t1, double dt,
                    const std::function<mocap::Pose(double)>& pose_at) {
    std::ostringstream out;
    out << "t,px,py,pz,qw,qx,qy,qz\n";
    for (double t = t0; t <= t1 + 1e-9; t += dt) {
        mocap::Pose p = pose_at(t);
        out << t << "," << p.p.x << "," << p.p.y << "," << p.p.z << "," << p.q.w << "," << p.q.x
            << "," << p.q.y << "," << p.q.z << "\n";
    }
    testutil::spit(path, out.str());
}

std::map<std::string, std::string> dir_digest(const fs::path& dir) {
    std::map<std::string, std::string> digest;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            digest[fs::relative(entry.path(), dir).string()] = testutil::slurp(entry.path());
        }
    }
    return digest;
}

}  // namespace

TEST_CASE("help exits zero on every subcommand") {
    testutil::TempDir dir;
    REQUIRE(run_cli("--help", dir.path()).exit_code == 0);
    for (const char* sub : {"key", "sync", "stats", "generate", "nshot", "split", "eval"}) {
        INFO(sub);
        RunResult r = run_cli(std::string(sub) + " --help", dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.out.find("--") != std::string::npos);
    }
}

TEST_CASE("unknown flags are config errors") {
    testutil::TempDir dir;
    REQUIRE(run_cli("generate --bogus", dir.path()).exit_code == 2);
    REQUIRE(run_cli("frobnicate", dir.path()).exit_code == 2);
}

TEST_CASE("key subcommand") {
    testutil::TempDir dir;

    SECTION("green-only frames extract nothing, exit 4") {
        write_frames(dir / "frames", false);
        RunResult r = run_cli("key --frames " + (dir / "frames").string() + " --out " +
                                  (dir / "lib").string() + " --class mav",
                              dir.path());
        REQUIRE(r.exit_code == 4);
    }
    SECTION("synthetic frames extract one asset each") {
        write_frames(dir / "frames", true);
        RunResult r = run_cli("key --frames " + (dir / "frames").string() + " --out " +
                                  (dir / "lib").string() + " --class mav",
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.out.find("extracted=3") != std::string::npos);
        auto lib = assetlib::load_library(dir / "lib");
        REQUIRE(lib.assets.size() == 3);
        REQUIRE(lib.assets[0].rgba.width() == 20);
        // re-running overwrites with identical bytes
        auto before = dir_digest(dir / "lib");
        REQUIRE(run_cli("key --frames " + (dir / "frames").string() + " --out " +
                            (dir / "lib").string() + " --class mav",
                        dir.path())
                    .exit_code == 0);
        REQUIRE(dir_digest(dir / "lib") == before);
    }
    SECTION("pose tracks attach views to every asset") {
        write_frames(dir / "frames", true);
        // camera orbits at radius 2, object fixed at origin
        write_pose_csv(dir / "camera.csv", 0.0, 1.0, 0.005, [](double t) {
            mocap::Pose p;
            p.t = t;
            p.p = {2.0 * std::cos(t), 2.0 * std::sin(t), 1.0};
            p.q = mocap::Quat::from_axis_angle({0, 0, 1}, t);
            return p;
        });
        write_pose_csv(dir / "object.csv", 0.0, 1.0, 0.005, [](double t) {
            mocap::Pose p;
            p.t = t;
            return p;
        });
        RunResult r = run_cli("key --frames " + (dir / "frames").string() + " --out " +
                                  (dir / "libp").string() + " --class mav --pose " +
                                  (dir / "object.csv").string() + " --camera " +
                                  (dir / "camera.csv").string() + " --offset 0.1 --fps 30",
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.out.find("posed=3") != std::string::npos);
        auto lib = assetlib::load_library(dir / "libp");
        REQUIRE(lib.assets.size() == 3);
        for (const auto& asset : lib.assets) {
            REQUIRE(asset.view.has_value());
            REQUIRE(asset.view->depth == Catch::Approx(std::sqrt(5.0)).margin(1e-6));
        }
    }
}

TEST_CASE("sync subcommand") {
    testutil::TempDir dir;
    // burst of rotation between t=2 and t=2.5 on the mocap clock
    write_pose_csv(dir / "cam.csv", 0.0, 10.0, 0.01, [](double t) {
        mocap::Pose p;
        p.t = t;
        double angle = (t < 2.0) ? 0.0 : (t < 2.5 ? (t - 2.0) * 8.0 : 4.0);
        p.q = mocap::Quat::from_axis_angle({0, 1, 0}, angle);
        return p;
    });
    // matching video: motion in the same window (zero offset)
    fs::create_directories(dir / "frames");
    int fps = 10;
    for (int k = 0; k < 100; ++k) {
        double t = k / static_cast<double>(fps);
        float shade = (t >= 2.0 && t < 2.5) ? (k % 2 ? 1.0f : 0.0f) : 0.5f;
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%06d.png", k);
        save_png((dir / "frames" / name).string(),
                 to_u8(testutil::solid_rgb(32, 32, shade, shade, shade)));
    }

    SECTION("zero offset recovered") {
        RunResult r = run_cli("sync --pose " + (dir / "cam.csv").string() + " --frames " +
                                  (dir / "frames").string() + " --fps 10 --window 5",
                              dir.path());
        REQUIRE(r.exit_code == 0);
        nlohmann::json j = nlohmann::json::parse(r.out);
        REQUIRE(std::abs(j["offset_s"].get<double>()) <= 0.15);
        REQUIRE(j["peak_correlation"].get<double>() > 0.2);
        REQUIRE(j.contains("common_rate_hz"));
    }
    SECTION("constant signals exit 5") {
        write_pose_csv(dir / "flat.csv", 0.0, 10.0, 0.01, [](double t) {
            mocap::Pose p;
            p.t = t;
            return p;
        });
        RunResult r = run_cli("sync --pose " + (dir / "flat.csv").string() + " --frames " +
                                  (dir / "frames").string() + " --fps 10",
                              dir.path());
        REQUIRE(r.exit_code == 5);
    }
}

namespace {

fs::path make_generate_fixture(const testutil::TempDir& dir) {
    fs::path assets = dir / "assets";
    fs::path bgs = dir / "bgs";
    fs::create_directories(bgs);
    for (int i = 0; i < 2; ++i) {
        ForegroundAsset asset;
        asset.class_label = i == 0 ? "autel" : "fla450";
        asset.id = asset.class_label + "_0";
        asset.rgba = to_u8(testutil::solid_rgba(50, 40, 0.6f, 0.4f, 0.3f, 1.0f));
        mocap::ViewSample vs;
        vs.v = {0, 0.6, 0.8};
        vs.depth = 1.5 + i;
        asset.view = vs;
        assetlib::store_asset(assets, asset);
    }
    save_png((bgs / "bg.png").string(),
             to_u8(testutil::solid_rgb(320, 240, 0.3f, 0.35f, 0.4f)));
    nlohmann::json config{{"master_seed", 20250810},
                          {"paths",
                           {{"assets", assets.string()}, {"backgrounds", bgs.string()}}}};
    testutil::spit(dir / "config.json", config.dump(2));
    return dir / "config.json";
}

}  // namespace

TEST_CASE("generate subcommand") {
    testutil::TempDir dir;
    fs::path config = make_generate_fixture(dir);

    SECTION("count 0 is a valid empty dataset") {
        RunResult r = run_cli("generate --config " + config.string() + " --count 0 --out " +
                                  (dir / "d0").string(),
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(fs::exists(dir / "d0" / "coco.json"));
    }
    SECTION("jobs 1 and jobs 4 produce identical bytes, replay too") {
        RunResult r1 = run_cli("generate --config " + config.string() +
                                   " --count 8 --jobs 1 --out " + (dir / "d1").string(),
                               dir.path());
        REQUIRE(r1.exit_code == 0);
        RunResult r4 = run_cli("generate --config " + config.string() +
                                   " --count 8 --jobs 4 --out " + (dir / "d4").string(),
                               dir.path());
        REQUIRE(r4.exit_code == 0);
        REQUIRE(dir_digest(dir / "d1") == dir_digest(dir / "d4"));

        RunResult rr = run_cli("generate --replay " + (dir / "d1" / "manifest.json").string() +
                                   " --out " + (dir / "dr").string(),
                               dir.path());
        REQUIRE(rr.exit_code == 0);
        REQUIRE(dir_digest(dir / "d1") == dir_digest(dir / "dr"));
    }
    SECTION("config with an unknown key exits 2 and writes nothing") {
        testutil::spit(dir / "bad.json", R"({"master_seed": 1, "scale_mih": 0.2})");
        RunResult r = run_cli("generate --config " + (dir / "bad.json").string() +
                                  " --count 1 --out " + (dir / "dbad").string(),
                              dir.path());
        REQUIRE(r.exit_code == 2);
        REQUIRE_FALSE(fs::exists(dir / "dbad"));
    }
}

TEST_CASE("nshot and split subcommands") {
    testutil::TempDir dir;
    // 60 images, one autel each, fla450 on every other image
    sampler::LabeledSet set;
    set.vocabulary = {"autel", "fla450"};
    for (int i = 0; i < 60; ++i) {
        sampler::LabeledImage img;
        img.ref = "img_" + std::to_string(i) + ".png";
        img.width = 640;
        img.height = 480;
        img.instances.push_back({"autel", BoxF{0, 0, 10, 10}});
        if (i % 2 == 0) img.instances.push_back({"fla450", BoxF{30, 30, 50, 50}});
        set.images.push_back(img);
    }
    testutil::spit(dir / "gt.json", sampler::labeled_set_to_coco(set).dump(2));

    SECTION("nshot guarantees the floor") {
        RunResult r = run_cli("nshot --coco " + (dir / "gt.json").string() +
                                  " --n 5 --seed 3 --out " + (dir / "sub.json").string(),
                              dir.path());
        REQUIRE(r.exit_code == 0);
        sampler::LabeledSet subset =
            sampler::load_labeled_set((dir / "sub.json").string());
        std::map<std::string, int> counts;
        for (const auto& img : subset.images) {
            for (const auto& inst : img.instances) ++counts[inst.class_label];
        }
        REQUIRE(counts["autel"] >= 5);
        REQUIRE(counts["fla450"] >= 5);
    }
    SECTION("infeasible nshot exits 5") {
        RunResult r = run_cli("nshot --coco " + (dir / "gt.json").string() +
                                  " --n 500 --seed 3 --out " + (dir / "sub.json").string(),
                              dir.path());
        REQUIRE(r.exit_code == 5);
    }
    SECTION("split honors the ratio") {
        RunResult r = run_cli("split --coco " + (dir / "gt.json").string() +
                                  " --ratio 5:1 --seed 3 --out-train " +
                                  (dir / "train.json").string() + " --out-val " +
                                  (dir / "val.json").string(),
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(sampler::load_labeled_set((dir / "train.json").string()).images.size() == 50);
        REQUIRE(sampler::load_labeled_set((dir / "val.json").string()).images.size() == 10);
    }
}

TEST_CASE("eval subcommand") {
    testutil::TempDir dir;
    sampler::LabeledSet set;
    set.vocabulary = {"autel"};
    sampler::LabeledImage img;
    img.ref = "img.png";
    img.width = 640;
    img.height = 480;
    img.instances.push_back({"autel", BoxF{10, 10, 30, 30}});
    set.images.push_back(img);
    testutil::spit(dir / "gt.json", sampler::labeled_set_to_coco(set).dump(2));
    testutil::spit(dir / "preds.jsonl",
                   R"({"image":"img.png","class":"autel","box":[10,10,30,30],"confidence":0.9})"
                   "\n");

    SECTION("detection table and json report") {
        RunResult r = run_cli("eval --pred " + (dir / "preds.jsonl").string() + " --gt " +
                                  (dir / "gt.json").string() + " --json " +
                                  (dir / "report.json").string(),
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.out.find("mAP") != std::string::npos);
        nlohmann::json report = nlohmann::json::parse(testutil::slurp(dir / "report.json"));
        REQUIRE(report["mAP"].get<double>() == 1.0);
        REQUIRE(report["per_class"]["autel"]["ap"].get<double>() == 1.0);
    }
    SECTION("segmentation mode on mask files") {
        ImageU8 gt_mask(16, 16, 1, 0);
        for (int i = 0; i < 8; ++i) gt_mask(i, 0) = 255;
        save_png((dir / "gt.png").string(), gt_mask);
        save_png((dir / "pred.png").string(), gt_mask);
        RunResult r = run_cli("eval --seg --pred " + (dir / "pred.png").string() + " --gt " +
                                  (dir / "gt.png").string(),
                              dir.path());
        REQUIRE(r.exit_code == 0);
        REQUIRE(r.out.find("100.00") != std::string::npos);
    }
}

TEST_CASE("stats subcommand") {
    testutil::TempDir dir;
    ForegroundAsset asset;
    asset.class_label = "autel";
    asset.rgba = to_u8(testutil::solid_rgba(10, 10, 0.5f, 0.5f, 0.5f, 1.0f));
    mocap::ViewSample vs;
    vs.v = {0, 0, 1};
    vs.depth = 2;
    asset.view = vs;
    assetlib::store_asset(dir / "lib", asset);

    RunResult r = run_cli("stats --lib " + (dir / "lib").string() + " --class autel --out " +
                              (dir / "heat.png").string(),
                          dir.path());
    REQUIRE(r.exit_code == 0);
    DecodedPng heat = load_png((dir / "heat.png").string());
    REQUIRE(heat.u8.width() == 36 * 8);
    REQUIRE(heat.u8.height() == 18 * 8);

    RunResult missing = run_cli("stats --lib " + (dir / "lib").string() +
                                    " --class ghost --out " + (dir / "h2.png").string(),
                                dir.path());
    REQUIRE(missing.exit_code == 4);
}
