#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "synthforge/assetlib.hpp"
#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/log.hpp"
#include "synthforge/poisson.hpp"
#include "synthforge/rng.hpp"

namespace synthforge::compositor {

enum class BlendMode { Feather, Poisson };
enum class PlacementPolicy { FullyInside, TruncationAllowed };
enum class BrightnessMode { Scale, Depth };

struct GenConfig {
    double scale_min = 0.1;
    double scale_max = 0.3;
    double s_ref = 0.3;             // scale at which the brightness factor is 1
    double brightness_floor = 0.3;  // f_min
    BrightnessMode brightness_mode = BrightnessMode::Scale;
    int objects_min = 1;
    int objects_max = 3;
    bool inplane_rotation = true;  // uniform(0, 2*pi) when true
    BlendMode blend = BlendMode::Feather;
    double feather_sigma = 1.0;  // px; 0 disables feathering
    PoissonParams poisson;
    PlacementPolicy placement = PlacementPolicy::FullyInside;
    double min_visible_fraction = 0.25;  // truncation-allowed only
    double max_pairwise_overlap_iou = 0.3;
    float mask_threshold = 0.5f;  // alpha level defining instance coverage
    std::vector<std::string> classes;  // empty: every class in the library
    assetlib::SamplingStrategy strategy;
    std::uint64_t master_seed = 0;

    void validate() const {
        if (!(0.0 < scale_min && scale_min <= scale_max)) {
            raise(ErrorKind::Config, "require 0 < scale_min <= scale_max");
        }
        if (!(0.0 < brightness_floor && brightness_floor <= 1.0)) {
            raise(ErrorKind::Config, "brightness_floor must be in (0,1]");
        }
        if (s_ref <= 0.0) raise(ErrorKind::Config, "s_ref must be positive");
        if (objects_min < 1 || objects_max < objects_min) {
            raise(ErrorKind::Config, "objects_per_image range must satisfy 1 <= min <= max");
        }
        if (max_pairwise_overlap_iou < 0.0 || max_pairwise_overlap_iou > 1.0) {
            raise(ErrorKind::Config, "max_pairwise_overlap_iou must be in [0,1]");
        }
        if (feather_sigma < 0.0) raise(ErrorKind::Config, "feather sigma must be >= 0");
        if (!(min_visible_fraction > 0.0 && min_visible_fraction <= 1.0)) {
            raise(ErrorKind::Config, "min_visible_fraction must be in (0,1]");
        }
        if (!(mask_threshold > 0.0f && mask_threshold < 1.0f)) {
            raise(ErrorKind::Config, "mask_threshold must be in (0,1)");
        }
    }
};

inline double brightness_factor(double s, double s_ref, double floor_value) {
    double raw = (s / s_ref) * (s / s_ref);
    return std::min(1.0, std::max(floor_value, raw));
}

inline double brightness_factor_depth(double depth, double d_ref, double floor_value) {
    double raw = (d_ref / depth) * (d_ref / depth);
    return std::min(1.0, std::max(floor_value, raw));
}

struct Placement {
    std::string asset_id;
    std::string class_label;
    double scale = 1.0;
    double cx = 0, cy = 0;  // center of the transformed raster, bg pixels
    double rotation = 0;    // radians about the view axis
    double brightness = 1.0;
    std::optional<double> depth;  // meters, from the asset pose when present
};

struct SceneRecipe {
    std::string background_ref;
    std::vector<Placement> placements;  // ascending scale = far-to-near
    std::uint64_t sample_seed = 0;
    int dropped_objects = 0;  // placements abandoned after rejection budget
};

struct InstanceAnnotation {
    std::string class_label;
    BoxI amodal_box;   // full transformed extent, clipped to the image
    BoxI visible_box;  // tight box of visible_mask
    ImageU8 visible_mask;  // full-frame binary raster
    std::optional<mocap::ViewSample> view;
    double scale = 0;
};

struct AnnotatedSample {
    ImageF image;  // RGB
    std::vector<InstanceAnnotation> instances;
    SceneRecipe recipe;
};

// Pixel size of an asset after scaling by s and rotating by theta.
inline std::pair<int, int> transformed_extent(int w, int h, double s, double theta) {
    int sw = static_cast<int>(std::lround(w * s));
    int sh = static_cast<int>(std::lround(h * s));
    if (sw < 1 || sh < 1) {
        raise(ErrorKind::DegenerateTransform, "scaled asset collapses below 1x1");
    }
    double c = std::abs(std::cos(theta));
    double sn = std::abs(std::sin(theta));
    if (c < 1e-12) c = 0.0;
    if (sn < 1e-12) sn = 0.0;
    int out_w = static_cast<int>(std::ceil(c * sw + sn * sh - 1e-9));
    int out_h = static_cast<int>(std::ceil(sn * sw + c * sh - 1e-9));
    return {std::max(out_w, 1), std::max(out_h, 1)};
}

// Scale-then-rotate about the center with the canvas expanded to hold the
// rotated extent. Resampling is bilinear on premultiplied alpha; the result
// is un-premultiplied (assets stay straight-alpha end to end).
inline ImageF transform_asset(const ImageF& asset, double s, double theta) {
    if (asset.channels() != 4) raise(ErrorKind::InvalidInput, "transform_asset expects RGBA");
    if (s <= 0.0) raise(ErrorKind::InvalidInput, "scale must be positive");
    if (s == 1.0 && theta == 0.0) return asset;

    const int w = asset.width(), h = asset.height();
    auto [out_w, out_h] = transformed_extent(w, h, s, theta);
    int sw = static_cast<int>(std::lround(w * s));
    int sh = static_cast<int>(std::lround(h * s));
    const double ax = static_cast<double>(sw) / w;
    const double ay = static_cast<double>(sh) / h;

    double c = std::cos(theta), sn = std::sin(theta);
    if (std::abs(c) < 1e-12) c = 0.0;
    if (std::abs(sn) < 1e-12) sn = 0.0;

    ImageF out(out_w, out_h, 4, 0.0f);
    const double ocx = (out_w - 1) * 0.5, ocy = (out_h - 1) * 0.5;
    const double scx = (sw - 1) * 0.5, scy = (sh - 1) * 0.5;
    for (int y = 0; y < out_h; ++y) {
        for (int x = 0; x < out_w; ++x) {
            // inverse rotate into scaled-image coords, then inverse scale
            double xo = x - ocx, yo = y - ocy;
            double xs = c * xo + sn * yo + scx;
            double ys = -sn * xo + c * yo + scy;
            double u = (xs + 0.5) / ax - 0.5;
            double v = (ys + 0.5) / ay - 0.5;
            if (u <= -1.0 || v <= -1.0 || u >= w || v >= h) continue;

            int u0 = static_cast<int>(std::floor(u));
            int v0 = static_cast<int>(std::floor(v));
            double fu = u - u0, fv = v - v0;
            double acc[4] = {0, 0, 0, 0};
            for (int dy = 0; dy < 2; ++dy) {
                for (int dx = 0; dx < 2; ++dx) {
                    int sx = u0 + dx, sy = v0 + dy;
                    if (sx < 0 || sy < 0 || sx >= w || sy >= h) continue;
                    double wgt = (dx ? fu : 1.0 - fu) * (dy ? fv : 1.0 - fv);
                    if (wgt == 0.0) continue;
                    double a = asset(sx, sy, 3);
                    acc[0] += wgt * asset(sx, sy, 0) * a;
                    acc[1] += wgt * asset(sx, sy, 1) * a;
                    acc[2] += wgt * asset(sx, sy, 2) * a;
                    acc[3] += wgt * a;
                }
            }
            if (acc[3] > 1e-8) {
                out(x, y, 0) = clamp01(static_cast<float>(acc[0] / acc[3]));
                out(x, y, 1) = clamp01(static_cast<float>(acc[1] / acc[3]));
                out(x, y, 2) = clamp01(static_cast<float>(acc[2] / acc[3]));
                out(x, y, 3) = clamp01(static_cast<float>(acc[3]));
            }
        }
    }
    return out;
}

// Multiplies RGB by the inverse-square brightness factor; alpha untouched.
inline ImageF brightness_adjust(const ImageF& raster, double factor) {
    if (!(factor > 0.0 && factor <= 1.0)) {
        raise(ErrorKind::InvalidInput, "brightness factor must be in (0,1]");
    }
    ImageF out = raster;
    const int rgb = std::min(3, out.channels());
    for (int y = 0; y < out.height(); ++y) {
        for (int x = 0; x < out.width(); ++x) {
            for (int ch = 0; ch < rgb; ++ch) {
                out(x, y, ch) = clamp01(static_cast<float>(out(x, y, ch) * factor));
            }
        }
    }
    return out;
}

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma, int radius) {
    std::vector<double> k(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Pads the raster by the blur radius and convolves the alpha channel with a
// separable Gaussian. RGB is copied, never blurred: the feather softens the
// matte seam without smearing object texture.
inline ImageF feather_alpha(const ImageF& fg, double sigma, int& pad_out) {
    if (sigma <= 0.0) {
        pad_out = 0;
        return fg;
    }
    const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    pad_out = radius;
    const int w = fg.width(), h = fg.height();
    const int pw = w + 2 * radius, ph = h + 2 * radius;
    ImageF padded(pw, ph, 4, 0.0f);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            for (int ch = 0; ch < 4; ++ch) padded(x + radius, y + radius, ch) = fg(x, y, ch);
        }
    }
    std::vector<double> kernel = gaussian_kernel(sigma, radius);
    std::vector<float> tmp(static_cast<std::size_t>(pw) * ph, 0.0f);
    for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int sx = x + i;
                if (sx < 0 || sx >= pw) continue;
                acc += kernel[i + radius] * padded(sx, y, 3);
            }
            tmp[static_cast<std::size_t>(y) * pw + x] = static_cast<float>(acc);
        }
    }
    for (int y = 0; y < ph; ++y) {
        for (int x = 0; x < pw; ++x) {
            double acc = 0;
            for (int i = -radius; i <= radius; ++i) {
                int sy = y + i;
                if (sy < 0 || sy >= ph) continue;
                acc += kernel[i + radius] * tmp[static_cast<std::size_t>(sy) * pw + x];
            }
            padded(x, y, 3) = static_cast<float>(acc);
        }
    }
    return padded;
}

inline void composite_over(ImageF& bg, const ImageF& fg, int tlx, int tly) {
    for (int y = 0; y < fg.height(); ++y) {
        int gy = tly + y;
        if (gy < 0 || gy >= bg.height()) continue;
        for (int x = 0; x < fg.width(); ++x) {
            int gx = tlx + x;
            if (gx < 0 || gx >= bg.width()) continue;
            float a = fg(x, y, 3);
            if (a <= 0.0f) continue;
            for (int ch = 0; ch < 3; ++ch) {
                bg(gx, gy, ch) = a * fg(x, y, ch) + (1.0f - a) * bg(gx, gy, ch);
            }
        }
    }
}

inline bool footprint_intersects(const ImageF& bg, const ImageF& fg, int tlx, int tly) {
    return tlx < bg.width() && tly < bg.height() && tlx + fg.width() > 0 && tly + fg.height() > 0;
}

}  // namespace detail

// Gaussian-feathered over-compositing: the alpha channel is blurred with
// Gaussian(sigma), then out = a*fg + (1-a)*bg over the footprint.
inline ImageF alpha_blend(const ImageF& background, const ImageF& fg, double cx, double cy,
                          double sigma) {
    if (background.channels() < 3 || fg.channels() != 4) {
        raise(ErrorKind::InvalidInput, "alpha_blend expects RGB background and RGBA foreground");
    }
    ImageF out = background;
    int tlx = static_cast<int>(std::lround(cx - fg.width() * 0.5));
    int tly = static_cast<int>(std::lround(cy - fg.height() * 0.5));
    if (!detail::footprint_intersects(background, fg, tlx, tly)) {
        log_warn("alpha_blend: foreground footprint misses the background, no-op");
        return out;
    }
    int pad = 0;
    ImageF feathered = detail::feather_alpha(fg, sigma, pad);
    detail::composite_over(out, feathered, tlx - pad, tly - pad);
    return out;
}

// Poisson variant of the public blend entry point (center-based placement).
inline ImageF poisson_blend_at(const ImageF& background, const ImageF& fg, double cx, double cy,
                               const PoissonParams& params, PoissonStats* stats = nullptr) {
    int tlx = static_cast<int>(std::lround(cx - fg.width() * 0.5));
    int tly = static_cast<int>(std::lround(cy - fg.height() * 0.5));
    return poisson_blend(background, fg, tlx, tly, params, stats);
}

// A background the sampler can place against without holding pixel data.
struct BackgroundRef {
    std::string name;
    int width = 0;
    int height = 0;
};

namespace detail {

inline BoxF placement_boxf(const Placement& pl, int ext_w, int ext_h) {
    double tlx = std::lround(pl.cx - ext_w * 0.5);
    double tly = std::lround(pl.cy - ext_h * 0.5);
    return BoxF{tlx, tly, tlx + ext_w, tly + ext_h};
}

}  // namespace detail

// Resolve one randomized scene: background, object count, per-object asset /
// scale / rotation / center / brightness. The rng stream is derived from
// (master_seed, sample_index), so any sample can be regenerated in
// isolation. Placement centers are rejection-resampled (<= 100 tries) until
// the pairwise amodal-box overlap constraint holds; objects that never fit
// are dropped with a warning.
inline SceneRecipe sample_recipe(const GenConfig& config,
                                 const std::vector<BackgroundRef>& backgrounds,
                                 const assetlib::AssetLibrary& library,
                                 std::uint64_t sample_index) {
    config.validate();
    if (backgrounds.empty()) raise(ErrorKind::InvalidInput, "no backgrounds available");
    std::vector<std::string> classes = config.classes.empty() ? library.classes() : config.classes;
    if (classes.empty()) raise(ErrorKind::InvalidInput, "no classes available");

    RngStream rng(derive_seed(config.master_seed, sample_index));
    SceneRecipe recipe;
    recipe.sample_seed = derive_seed(config.master_seed, sample_index);

    const BackgroundRef& bg = backgrounds[rng.uniform_int(backgrounds.size())];
    recipe.background_ref = bg.name;

    int count = config.objects_min +
                static_cast<int>(rng.uniform_int(
                    static_cast<std::uint64_t>(config.objects_max - config.objects_min) + 1));

    struct Accepted {
        Placement pl;
        BoxF box;
    };
    std::vector<Accepted> accepted;
    for (int obj = 0; obj < count; ++obj) {
        const std::string& cls = classes[rng.uniform_int(classes.size())];
        const ForegroundAsset& asset = assetlib::sample_asset(library, cls, config.strategy, rng);
        double s = rng.uniform(config.scale_min, config.scale_max);
        double theta = config.inplane_rotation ? rng.uniform(0.0, 2.0 * M_PI) : 0.0;
        auto [ext_w, ext_h] = transformed_extent(asset.rgba.width(), asset.rgba.height(), s, theta);

        Placement pl;
        pl.asset_id = asset.id;
        pl.class_label = cls;
        pl.scale = s;
        pl.rotation = theta;
        if (asset.view) pl.depth = asset.view->depth;

        bool placed = false;
        for (int attempt = 0; attempt < 100 && !placed; ++attempt) {
            long tlx, tly;
            if (config.placement == PlacementPolicy::FullyInside) {
                if (ext_w > bg.width || ext_h > bg.height) break;  // cannot ever fit
                tlx = static_cast<long>(rng.uniform_int(
                    static_cast<std::uint64_t>(bg.width - ext_w) + 1));
                tly = static_cast<long>(rng.uniform_int(
                    static_cast<std::uint64_t>(bg.height - ext_h) + 1));
            } else {
                // at least one pixel on screen; visibility checked below
                tlx = static_cast<long>(rng.uniform_int(
                          static_cast<std::uint64_t>(bg.width + ext_w - 1))) - ext_w + 1;
                tly = static_cast<long>(rng.uniform_int(
                          static_cast<std::uint64_t>(bg.height + ext_h - 1))) - ext_h + 1;
            }
            pl.cx = tlx + ext_w * 0.5;
            pl.cy = tly + ext_h * 0.5;
            BoxF box{static_cast<double>(tlx), static_cast<double>(tly),
                     static_cast<double>(tlx + ext_w), static_cast<double>(tly + ext_h)};
            if (config.placement == PlacementPolicy::TruncationAllowed) {
                BoxF frame{0, 0, static_cast<double>(bg.width), static_cast<double>(bg.height)};
                double visible = intersection_area(box, frame) / box.area();
                if (visible < config.min_visible_fraction) continue;
            }
            bool overlaps = false;
            for (const auto& other : accepted) {
                if (iou(box, other.box) > config.max_pairwise_overlap_iou) {
                    overlaps = true;
                    break;
                }
            }
            if (overlaps) continue;
            accepted.push_back({pl, box});
            placed = true;
        }
        if (!placed) {
            ++recipe.dropped_objects;
            log_warn("sample " + std::to_string(sample_index) + ": dropped an object after " +
                     std::string("100 placement attempts"));
        }
    }
    if (accepted.empty()) {
        raise(ErrorKind::GenerationFailure, "no object could be placed");
    }

    // brightness factors; depth mode is anchored at the nearest object
    if (config.brightness_mode == BrightnessMode::Depth) {
        double d_ref = 0;
        bool any_depth = false;
        for (const auto& a : accepted) {
            if (a.pl.depth) {
                d_ref = any_depth ? std::min(d_ref, *a.pl.depth) : *a.pl.depth;
                any_depth = true;
            }
        }
        for (auto& a : accepted) {
            a.pl.brightness =
                (any_depth && a.pl.depth)
                    ? brightness_factor_depth(*a.pl.depth, d_ref, config.brightness_floor)
                    : brightness_factor(a.pl.scale, config.s_ref, config.brightness_floor);
        }
    } else {
        for (auto& a : accepted) {
            a.pl.brightness = brightness_factor(a.pl.scale, config.s_ref, config.brightness_floor);
        }
    }

    std::stable_sort(accepted.begin(), accepted.end(),
                     [](const Accepted& a, const Accepted& b) { return a.pl.scale < b.pl.scale; });
    for (auto& a : accepted) recipe.placements.push_back(std::move(a.pl));
    return recipe;
}

// Painter's-algorithm rendering of a resolved recipe: placements draw in
// ascending-scale order (far to near); each nearer object erases the pixels
// it covers from earlier instances' visible masks.
inline AnnotatedSample render(const SceneRecipe& recipe, const GenConfig& config,
                              const assetlib::AssetLibrary& library, const ImageF& background) {
    config.validate();
    if (background.channels() < 3 || background.empty()) {
        raise(ErrorKind::InvalidInput, "render expects a non-empty RGB background");
    }
    for (std::size_t i = 1; i < recipe.placements.size(); ++i) {
        if (recipe.placements[i].scale < recipe.placements[i - 1].scale) {
            raise(ErrorKind::InvalidInput, "recipe placements must be sorted by ascending scale");
        }
    }

    AnnotatedSample sample;
    sample.recipe = recipe;
    sample.image = background;
    const int bw = background.width(), bh = background.height();

    struct Working {
        InstanceAnnotation ann;
        ImageU8 mask;
    };
    std::vector<Working> drawn;

    for (const Placement& pl : recipe.placements) {
        const ForegroundAsset& asset = library.by_id_or_throw(pl.asset_id);
        ImageF raster = transform_asset(to_float(asset.rgba), pl.scale, pl.rotation);
        raster = brightness_adjust(raster, pl.brightness);

        int tlx = static_cast<int>(std::lround(pl.cx - raster.width() * 0.5));
        int tly = static_cast<int>(std::lround(pl.cy - raster.height() * 0.5));

        ImageU8 coverage(bw, bh, 1, 0);
        if (config.blend == BlendMode::Feather) {
            int pad = 0;
            ImageF feathered = detail::feather_alpha(raster, config.feather_sigma, pad);
            detail::composite_over(sample.image, feathered, tlx - pad, tly - pad);
            for (int y = 0; y < feathered.height(); ++y) {
                int gy = tly - pad + y;
                if (gy < 0 || gy >= bh) continue;
                for (int x = 0; x < feathered.width(); ++x) {
                    int gx = tlx - pad + x;
                    if (gx < 0 || gx >= bw) continue;
                    if (feathered(x, y, 3) >= config.mask_threshold) coverage(gx, gy) = 1;
                }
            }
        } else {
            PoissonParams pp = config.poisson;
            pp.region_threshold = config.mask_threshold;
            sample.image = poisson_blend(sample.image, raster, tlx, tly, pp);
            for (int y = 0; y < raster.height(); ++y) {
                int gy = tly + y;
                if (gy < 0 || gy >= bh) continue;
                for (int x = 0; x < raster.width(); ++x) {
                    int gx = tlx + x;
                    if (gx < 0 || gx >= bw) continue;
                    if (raster(x, y, 3) >= config.mask_threshold) coverage(gx, gy) = 1;
                }
            }
        }

        // occlude everything drawn before
        for (auto& prev : drawn) {
            for (int y = 0; y < bh; ++y) {
                for (int x = 0; x < bw; ++x) {
                    if (coverage(x, y)) prev.mask(x, y) = 0;
                }
            }
        }

        Working w;
        w.ann.class_label = pl.class_label;
        w.ann.scale = pl.scale;
        w.ann.view = asset.view;
        BoxI amodal{tlx, tly, tlx + raster.width() - 1, tly + raster.height() - 1};
        w.ann.amodal_box = BoxI{std::max(amodal.x0, 0), std::max(amodal.y0, 0),
                                std::min(amodal.x1, bw - 1), std::min(amodal.y1, bh - 1)};
        w.mask = std::move(coverage);
        drawn.push_back(std::move(w));
    }

    for (auto& w : drawn) {
        BoxI box;
        bool any = false;
        long long area = 0;
        for (int y = 0; y < bh; ++y) {
            for (int x = 0; x < bw; ++x) {
                if (!w.mask(x, y)) continue;
                ++area;
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
        if (!any) continue;  // fully occluded instances are not annotated
        w.ann.visible_box = box;
        w.ann.visible_mask = std::move(w.mask);
        sample.instances.push_back(std::move(w.ann));
    }
    return sample;
}

}  // namespace synthforge::compositor
