#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "synthforge/annotate.hpp"
#include "synthforge/compositor.hpp"
#include "testutil.hpp"

using namespace synthforge;
using namespace synthforge::compositor;
using Catch::Approx;

namespace {

// Library with one solid mid-gray square asset per listed size.
struct LibFixture {
    testutil::TempDir dir;
    assetlib::AssetLibrary lib;
    std::vector<std::string> ids;

    explicit LibFixture(const std::vector<int>& sizes, float value = 0.5f,
                        const std::string& cls = "mav") {
        for (std::size_t i = 0; i < sizes.size(); ++i) {
            ForegroundAsset asset;
            asset.class_label = cls;
            asset.id = cls + "_sq" + std::to_string(i);
            asset.rgba = to_u8(testutil::solid_rgba(sizes[i], sizes[i], value, value, value, 1.0f));
            ids.push_back(assetlib::store_asset(dir.path(), asset));
        }
        lib = assetlib::load_library(dir.path());
    }
};

double alpha_mass(const ImageF& rgba) {
    double sum = 0;
    for (int y = 0; y < rgba.height(); ++y) {
        for (int x = 0; x < rgba.width(); ++x) sum += rgba(x, y, 3);
    }
    return sum;
}

}  // namespace

TEST_CASE("brightness_factor clamp") {
    REQUIRE(brightness_factor(0.3, 0.3, 0.3) == 1.0);
    REQUIRE(brightness_factor(0.15, 0.3, 0.3) == Approx(0.3));   // raw 0.25 clamped up
    REQUIRE(brightness_factor(0.15, 0.3, 0.1) == Approx(0.25));  // unclamped
}

TEST_CASE("brightness_adjust") {
    ImageF raster = testutil::solid_rgba(4, 4, 0.8f, 0.6f, 0.4f, 0.7f);

    SECTION("factor 1 is identity") {
        REQUIRE(brightness_adjust(raster, 1.0) == raster);
    }
    SECTION("rgb scaled, alpha untouched") {
        ImageF out = brightness_adjust(raster, 0.5);
        REQUIRE(out(0, 0, 0) == Approx(0.4));
        REQUIRE(out(0, 0, 3) == 0.7f);
    }
    SECTION("factor out of range rejected") {
        REQUIRE_THROWS_AS(brightness_adjust(raster, 0.0), Error);
        REQUIRE_THROWS_AS(brightness_adjust(raster, 1.5), Error);
    }
}

TEST_CASE("transform_asset") {
    RngStream rng(31);
    ImageF asset(100, 80, 4);
    for (std::size_t i = 0; i < asset.size(); ++i) {
        asset.data()[i] = static_cast<float>(rng.uniform());
    }

    SECTION("identity is bit-exact") {
        REQUIRE(transform_asset(asset, 1.0, 0.0) == asset);
    }
    SECTION("downscale halves the raster") {
        ImageF out = transform_asset(asset, 0.5, 0.0);
        REQUIRE(out.width() == 50);
        REQUIRE(out.height() == 40);
    }
    SECTION("quarter turn swaps dimensions and conserves alpha mass") {
        ImageF out = transform_asset(asset, 1.0, M_PI / 2);
        REQUIRE(out.width() == 80);
        REQUIRE(out.height() == 100);
        REQUIRE(alpha_mass(out) == Approx(alpha_mass(asset)).epsilon(0.01));
    }
    SECTION("degenerate scale rejected") {
        REQUIRE_THROWS_AS(transform_asset(asset, 0.001, 0.0), Error);
        REQUIRE_THROWS_AS(transform_asset(asset, -1.0, 0.0), Error);
    }
}

TEST_CASE("alpha_blend") {
    ImageF bg = testutil::solid_rgb(40, 40, 0.1f, 0.2f, 0.3f);

    SECTION("opaque foreground with no feather replaces the footprint") {
        ImageF fg = testutil::solid_rgba(10, 10, 0.9f, 0.8f, 0.7f, 1.0f);
        ImageF out = alpha_blend(bg, fg, 20, 20, 0.0);
        REQUIRE(out(20, 20, 0) == 0.9f);
        REQUIRE(out(14, 20, 0) == 0.1f);  // just outside the footprint
        REQUIRE(out(0, 0, 0) == 0.1f);
    }
    SECTION("transparent foreground is a no-op") {
        ImageF fg = testutil::solid_rgba(10, 10, 0.9f, 0.8f, 0.7f, 0.0f);
        REQUIRE(alpha_blend(bg, fg, 20, 20, 0.0) == bg);
    }
    SECTION("half alpha over black averages") {
        ImageF black = testutil::solid_rgb(40, 40, 0, 0, 0);
        ImageF fg = testutil::solid_rgba(10, 10, 0.8f, 0.6f, 0.4f, 0.5f);
        ImageF out = alpha_blend(black, fg, 20, 20, 0.0);
        REQUIRE(out(20, 20, 0) == Approx(0.4).margin(1e-6));
        REQUIRE(out(20, 20, 1) == Approx(0.3).margin(1e-6));
    }
    SECTION("disjoint footprint warns and returns the background") {
        ImageF fg = testutil::solid_rgba(10, 10, 1, 1, 1, 1.0f);
        REQUIRE(alpha_blend(bg, fg, 500, 500, 0.0) == bg);
    }
}

TEST_CASE("sample_recipe basics") {
    LibFixture fixture({60});
    std::vector<BackgroundRef> bgs{{"bg.png", 320, 240}};
    GenConfig config;
    config.master_seed = 99;

    SECTION("single object, single asset") {
        GenConfig one = config;
        one.objects_min = one.objects_max = 1;
        SceneRecipe recipe = sample_recipe(one, bgs, fixture.lib, 0);
        REQUIRE(recipe.placements.size() == 1);
        REQUIRE(recipe.placements[0].asset_id == fixture.ids[0]);
        REQUIRE(recipe.background_ref == "bg.png");
        REQUIRE(recipe.placements[0].scale >= 0.1);
        REQUIRE(recipe.placements[0].scale <= 0.3);
    }
    SECTION("same seed, same recipe") {
        SceneRecipe a = sample_recipe(config, bgs, fixture.lib, 7);
        SceneRecipe b = sample_recipe(config, bgs, fixture.lib, 7);
        REQUIRE(annotate::recipe_json(a) == annotate::recipe_json(b));
    }
    SECTION("different sample indices diverge") {
        SceneRecipe a = sample_recipe(config, bgs, fixture.lib, 1);
        SceneRecipe b = sample_recipe(config, bgs, fixture.lib, 2);
        REQUIRE(annotate::recipe_json(a) != annotate::recipe_json(b));
    }
    SECTION("placements are sorted ascending by scale") {
        GenConfig many = config;
        many.objects_min = many.objects_max = 3;
        many.max_pairwise_overlap_iou = 1.0;
        SceneRecipe recipe = sample_recipe(many, bgs, fixture.lib, 3);
        for (std::size_t i = 1; i < recipe.placements.size(); ++i) {
            REQUIRE(recipe.placements[i].scale >= recipe.placements[i - 1].scale);
        }
    }
}

TEST_CASE("sampled scales are uniform over the configured range") {
    LibFixture fixture({60});
    std::vector<BackgroundRef> bgs{{"bg.png", 320, 240}};
    GenConfig config;
    config.master_seed = 5;
    config.objects_min = config.objects_max = 1;

    double sum = 0;
    double lo = 1.0, hi = 0.0;
    const int n = 10000;
    for (int i = 0; i < n; ++i) {
        SceneRecipe recipe = sample_recipe(config, bgs, fixture.lib, i);
        double s = recipe.placements[0].scale;
        sum += s;
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    REQUIRE(sum / n == Approx(0.2).margin(0.005));
    REQUIRE(lo >= 0.1);
    REQUIRE(hi <= 0.3);
}

TEST_CASE("fully-inside placement never crosses the frame") {
    LibFixture fixture({80});
    std::vector<BackgroundRef> bgs{{"bg.png", 200, 150}};
    GenConfig config;
    config.master_seed = 6;
    config.objects_min = config.objects_max = 2;
    config.max_pairwise_overlap_iou = 1.0;
    for (int i = 0; i < 200; ++i) {
        SceneRecipe recipe = sample_recipe(config, bgs, fixture.lib, i);
        for (const auto& pl : recipe.placements) {
            auto [w, h] = transformed_extent(80, 80, pl.scale, pl.rotation);
            REQUIRE(pl.cx - w * 0.5 >= -1e-9);
            REQUIRE(pl.cy - h * 0.5 >= -1e-9);
            REQUIRE(pl.cx + w * 0.5 <= 200 + 1e-9);
            REQUIRE(pl.cy + h * 0.5 <= 150 + 1e-9);
        }
    }
}

TEST_CASE("overlap constraint respected") {
    LibFixture fixture({60});
    std::vector<BackgroundRef> bgs{{"bg.png", 100, 100}};
    GenConfig config;
    config.master_seed = 8;
    config.objects_min = config.objects_max = 4;
    config.max_pairwise_overlap_iou = 0.1;
    config.inplane_rotation = false;
    // four ~50px squares cannot all fit a 100px frame at IoU <= 0.1
    config.scale_min = 0.8;
    config.scale_max = 0.9;
    int dropped_total = 0;
    for (int i = 0; i < 50; ++i) {
        SceneRecipe recipe = sample_recipe(config, bgs, fixture.lib, i);
        dropped_total += recipe.dropped_objects;
        for (std::size_t a = 0; a < recipe.placements.size(); ++a) {
            for (std::size_t b = a + 1; b < recipe.placements.size(); ++b) {
                auto ea = transformed_extent(60, 60, recipe.placements[a].scale,
                                             recipe.placements[a].rotation);
                auto eb = transformed_extent(60, 60, recipe.placements[b].scale,
                                             recipe.placements[b].rotation);
                BoxF ba{recipe.placements[a].cx - ea.first * 0.5,
                        recipe.placements[a].cy - ea.second * 0.5,
                        recipe.placements[a].cx + ea.first * 0.5,
                        recipe.placements[a].cy + ea.second * 0.5};
                BoxF bb{recipe.placements[b].cx - eb.first * 0.5,
                        recipe.placements[b].cy - eb.second * 0.5,
                        recipe.placements[b].cx + eb.first * 0.5,
                        recipe.placements[b].cy + eb.second * 0.5};
                REQUIRE(iou(ba, bb) <= 0.1 + 1e-9);
            }
        }
    }
    // cramming four 60px squares into 100x100 at IoU <= 0.1 must drop some
    REQUIRE(dropped_total > 0);
}

TEST_CASE("render") {
    LibFixture fixture({60});
    ImageF bg = testutil::solid_rgb(200, 160, 0.05f, 0.05f, 0.05f);
    GenConfig config;
    config.feather_sigma = 0.0;
    config.inplane_rotation = false;

    SECTION("empty recipe returns the background with zero instances") {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        AnnotatedSample sample = render(recipe, config, fixture.lib, bg);
        REQUIRE(sample.instances.empty());
        REQUIRE(sample.image == bg);
    }
    SECTION("single opaque object: boxes agree and mask counts opaque pixels") {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        Placement pl;
        pl.asset_id = fixture.ids[0];
        pl.class_label = "mav";
        pl.scale = 0.5;  // 30x30
        pl.cx = 100;
        pl.cy = 80;
        pl.brightness = 1.0;
        recipe.placements.push_back(pl);
        AnnotatedSample sample = render(recipe, config, fixture.lib, bg);
        REQUIRE(sample.instances.size() == 1);
        const auto& inst = sample.instances[0];
        REQUIRE(inst.amodal_box == BoxI{85, 65, 114, 94});
        REQUIRE(inst.visible_box == inst.amodal_box);
        long long count = 0;
        for (int y = 0; y < 160; ++y) {
            for (int x = 0; x < 200; ++x) count += inst.visible_mask(x, y) ? 1 : 0;
        }
        REQUIRE(count == 30 * 30);
    }
    SECTION("occlusion: nearer object erases the farther mask") {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        Placement far;
        far.asset_id = fixture.ids[0];
        far.class_label = "mav";
        far.scale = 0.25;  // 15x15
        far.cx = 100;
        far.cy = 80;
        far.brightness = 1.0;
        Placement near = far;
        near.scale = 0.5;  // 30x30, same center: full occlusion of the far one
        recipe.placements = {far, near};
        AnnotatedSample sample = render(recipe, config, fixture.lib, bg);
        // far instance fully hidden, so only the near instance is annotated
        REQUIRE(sample.instances.size() == 1);
        REQUIRE(sample.instances[0].scale == 0.5);

        Placement offset_near = near;
        offset_near.cx = 115;  // partial occlusion
        recipe.placements = {far, offset_near};
        sample = render(recipe, config, fixture.lib, bg);
        REQUIRE(sample.instances.size() == 2);
        const auto& far_inst = sample.instances[0];
        // far object spans x 93..107; near covers x >= 100
        REQUIRE(far_inst.visible_box == BoxI{93, 73, 99, 87});
        for (int y = 0; y < 160; ++y) {
            for (int x = 0; x < 200; ++x) {
                if (far_inst.visible_mask(x, y)) {
                    REQUIRE(x < 100);
                }
            }
        }
    }
    SECTION("masks are pairwise disjoint and boxes tight") {
        GenConfig cfg2 = config;
        cfg2.feather_sigma = 1.0;
        std::vector<BackgroundRef> bgs{{"bg.png", 200, 160}};
        cfg2.objects_min = cfg2.objects_max = 3;
        cfg2.max_pairwise_overlap_iou = 0.8;
        cfg2.inplane_rotation = true;
        cfg2.master_seed = 12;
        for (int i = 0; i < 10; ++i) {
            SceneRecipe recipe = sample_recipe(cfg2, bgs, fixture.lib, i);
            AnnotatedSample sample = render(recipe, cfg2, fixture.lib, bg);
            for (int y = 0; y < 160; ++y) {
                for (int x = 0; x < 200; ++x) {
                    int owners = 0;
                    for (const auto& inst : sample.instances) {
                        owners += inst.visible_mask(x, y) ? 1 : 0;
                    }
                    REQUIRE(owners <= 1);
                }
            }
            for (const auto& inst : sample.instances) {
                auto tight = annotate::bbox_from_mask(inst.visible_mask);
                REQUIRE(tight.has_value());
                REQUIRE(*tight == inst.visible_box);
                // visible stays within the amodal footprint
                REQUIRE(inst.visible_box.x0 >= inst.amodal_box.x0);
                REQUIRE(inst.visible_box.y0 >= inst.amodal_box.y0);
                REQUIRE(inst.visible_box.x1 <= inst.amodal_box.x1);
                REQUIRE(inst.visible_box.y1 <= inst.amodal_box.y1);
            }
        }
    }
    SECTION("pixels outside every footprint match the background bit-exactly") {
        for (BlendMode mode : {BlendMode::Feather, BlendMode::Poisson}) {
            GenConfig cfg2 = config;
            cfg2.blend = mode;
            cfg2.feather_sigma = 1.5;
            SceneRecipe recipe;
            recipe.background_ref = "bg.png";
            Placement pl;
            pl.asset_id = fixture.ids[0];
            pl.class_label = "mav";
            pl.scale = 0.5;  // 30x30 at the center, well interior
            pl.cx = 100;
            pl.cy = 80;
            pl.brightness = 1.0;
            recipe.placements.push_back(pl);
            AnnotatedSample sample = render(recipe, cfg2, fixture.lib, bg);
            int pad = mode == BlendMode::Feather ? 5 : 0;  // ceil(3*sigma)
            for (int y = 0; y < 160; ++y) {
                for (int x = 0; x < 200; ++x) {
                    bool near_fp = x >= 85 - pad && x <= 114 + pad && y >= 65 - pad &&
                                   y <= 94 + pad;
                    if (!near_fp) {
                        REQUIRE(sample.image(x, y, 0) == bg(x, y, 0));
                        REQUIRE(sample.image(x, y, 1) == bg(x, y, 1));
                        REQUIRE(sample.image(x, y, 2) == bg(x, y, 2));
                    }
                }
            }
        }
    }
    SECTION("missing asset is an error") {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        Placement pl;
        pl.asset_id = "ghost";
        pl.class_label = "mav";
        pl.scale = 0.5;
        pl.cx = 100;
        pl.cy = 80;
        recipe.placements.push_back(pl);
        REQUIRE_THROWS_AS(render(recipe, config, fixture.lib, bg), Error);
    }
    SECTION("unsorted placements rejected") {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        Placement a, b;
        a.asset_id = b.asset_id = fixture.ids[0];
        a.class_label = b.class_label = "mav";
        a.scale = 0.5;
        b.scale = 0.25;
        a.cx = b.cx = 100;
        a.cy = b.cy = 80;
        recipe.placements = {a, b};
        REQUIRE_THROWS_AS(render(recipe, config, fixture.lib, bg), Error);
    }
}

TEST_CASE("depth-driven brightness anchors at the nearest object") {
    testutil::TempDir dir;
    auto store_posed = [&](const std::string& id, double depth) {
        ForegroundAsset asset;
        asset.class_label = "mav";
        asset.id = id;
        asset.rgba = to_u8(testutil::solid_rgba(40, 40, 0.5f, 0.5f, 0.5f, 1.0f));
        mocap::ViewSample vs;
        vs.v = {0, 0, 1};
        vs.depth = depth;
        asset.view = vs;
        assetlib::store_asset(dir.path(), asset);
    };
    store_posed("near", 2.0);
    store_posed("far", 4.0);
    auto lib = assetlib::load_library(dir.path());

    std::vector<BackgroundRef> bgs{{"bg.png", 400, 300}};
    GenConfig config;
    config.master_seed = 21;
    config.brightness_mode = BrightnessMode::Depth;
    config.brightness_floor = 0.1;
    config.objects_min = config.objects_max = 2;
    config.max_pairwise_overlap_iou = 1.0;

    for (int i = 0; i < 40; ++i) {
        SceneRecipe recipe = sample_recipe(config, bgs, lib, i);
        double d_ref = 1e9;
        for (const auto& pl : recipe.placements) d_ref = std::min(d_ref, *pl.depth);
        for (const auto& pl : recipe.placements) {
            double expected = std::min(1.0, std::max(0.1, (d_ref / *pl.depth) *
                                                              (d_ref / *pl.depth)));
            REQUIRE(pl.brightness == Approx(expected).margin(1e-12));
        }
    }
}

TEST_CASE("render is deterministic") {
    LibFixture fixture({48});
    ImageF bg = testutil::solid_rgb(160, 120, 0.3f, 0.4f, 0.5f);
    std::vector<BackgroundRef> bgs{{"bg.png", 160, 120}};
    GenConfig config;
    config.master_seed = 77;
    SceneRecipe recipe = sample_recipe(config, bgs, fixture.lib, 5);
    AnnotatedSample a = render(recipe, config, fixture.lib, bg);
    AnnotatedSample b = render(recipe, config, fixture.lib, bg);
    REQUIRE(a.image == b.image);
}

TEST_CASE("mean luminance follows the inverse-square scale law") {
    LibFixture fixture({120});
    ImageF bg = testutil::solid_rgb(640, 480, 0, 0, 0);
    GenConfig config;
    config.feather_sigma = 0.0;
    config.inplane_rotation = false;
    config.s_ref = 0.3;
    config.brightness_floor = 0.1;

    auto mean_luminance = [&](double s) {
        SceneRecipe recipe;
        recipe.background_ref = "bg.png";
        Placement pl;
        pl.asset_id = fixture.ids[0];
        pl.class_label = "mav";
        pl.scale = s;
        pl.cx = 320;
        pl.cy = 240;
        pl.brightness = brightness_factor(s, config.s_ref, config.brightness_floor);
        recipe.placements.push_back(pl);
        AnnotatedSample sample = render(recipe, config, fixture.lib, bg);
        const auto& inst = sample.instances.at(0);
        double sum = 0;
        long long count = 0;
        for (int y = 0; y < 480; ++y) {
            for (int x = 0; x < 640; ++x) {
                if (!inst.visible_mask(x, y)) continue;
                sum += (sample.image(x, y, 0) + sample.image(x, y, 1) + sample.image(x, y, 2)) / 3.0;
                ++count;
            }
        }
        return sum / count;
    };

    double ref = mean_luminance(0.3);
    for (double s : {0.25, 0.2, 0.15}) {
        double ratio = mean_luminance(s) / ref;
        double expected = (s / 0.3) * (s / 0.3);
        REQUIRE(ratio == Approx(expected).epsilon(0.02));
    }
}
