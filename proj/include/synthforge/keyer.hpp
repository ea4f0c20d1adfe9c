#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "synthforge/asset.hpp"
#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/mocap.hpp"

namespace synthforge::keyer {

struct KeyerParams {
    float ramp_low = 0.05f;        // green dominance where alpha starts to fall
    float ramp_high = 0.25f;       // green dominance where alpha reaches 0
    bool despill_enabled = true;
    int min_component_area = 64;   // pixels
    float matte_threshold = 0.5f;  // alpha level defining binary foreground

    void validate() const {
        if (!(0.0f <= ramp_low && ramp_low < ramp_high && ramp_high <= 1.0f)) {
            raise(ErrorKind::InvalidInput, "require 0 <= ramp_low < ramp_high <= 1");
        }
        if (min_component_area < 0) {
            raise(ErrorKind::InvalidInput, "min_component_area must be >= 0");
        }
        if (!(0.0f < matte_threshold && matte_threshold < 1.0f)) {
            raise(ErrorKind::InvalidInput, "matte_threshold must be in (0,1)");
        }
    }
};

// Linear color-difference ramp on green dominance d = g - max(r, b).
inline float alpha_from_pixel(float r, float g, float b, const KeyerParams& params) {
    float d = g - std::max(r, b);
    if (d <= params.ramp_low) return 1.0f;
    if (d >= params.ramp_high) return 0.0f;
    return 1.0f - (d - params.ramp_low) / (params.ramp_high - params.ramp_low);
}

inline ImageF compute_alpha(const ImageF& frame, const KeyerParams& params) {
    params.validate();
    if (frame.empty() || frame.channels() < 3) {
        raise(ErrorKind::InvalidInput, "compute_alpha expects a non-empty RGB frame");
    }
    ImageF matte(frame.width(), frame.height(), 1);
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            matte(x, y) = alpha_from_pixel(frame(x, y, 0), frame(x, y, 1), frame(x, y, 2), params);
        }
    }
    return matte;
}

// Spill suppression g' = min(g, max(r, b)), applied only where alpha < 1.
// Never touches r or b and never raises any channel.
inline ImageF despill(const ImageF& frame, const ImageF& matte) {
    if (frame.width() != matte.width() || frame.height() != matte.height()) {
        raise(ErrorKind::InvalidInput, "matte dimensions must match frame");
    }
    ImageF out = frame;
    for (int y = 0; y < frame.height(); ++y) {
        for (int x = 0; x < frame.width(); ++x) {
            if (matte(x, y) < 1.0f) {
                float cap = std::max(out(x, y, 0), out(x, y, 2));
                out(x, y, 1) = std::min(out(x, y, 1), cap);
            }
        }
    }
    return out;
}

namespace detail {

// 8-connected component labels over a binary mask; label 0 = background.
inline std::vector<int> label_components(const std::vector<std::uint8_t>& mask, int w, int h,
                                         std::vector<long long>& areas) {
    std::vector<int> labels(static_cast<std::size_t>(w) * h, 0);
    areas.assign(1, 0);
    std::vector<std::size_t> stack;
    int next_label = 1;
    for (std::size_t start = 0; start < mask.size(); ++start) {
        if (!mask[start] || labels[start] != 0) continue;
        int label = next_label++;
        areas.push_back(0);
        stack.push_back(start);
        labels[start] = label;
        while (!stack.empty()) {
            std::size_t idx = stack.back();
            stack.pop_back();
            ++areas[label];
            int x = static_cast<int>(idx % w);
            int y = static_cast<int>(idx / w);
            for (int dy = -1; dy <= 1; ++dy) {
                for (int dx = -1; dx <= 1; ++dx) {
                    if (dx == 0 && dy == 0) continue;
                    int nx = x + dx, ny = y + dy;
                    if (nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
                    std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                    if (mask[nidx] && labels[nidx] == 0) {
                        labels[nidx] = label;
                        stack.push_back(nidx);
                    }
                }
            }
        }
    }
    return labels;
}

}  // namespace detail

// Key one frame into a tight RGBA cutout: alpha ramp, optional despill,
// small-component cleanup at the matte threshold, crop to the surviving
// foreground. The cutout stores straight alpha; the compositor premultiplies
// during resampling.
inline ForegroundAsset extract_asset(const ImageF& frame, const KeyerParams& params,
                                     const std::string& label,
                                     const std::optional<mocap::Pose>& rel_pose = {}) {
    params.validate();
    ImageF matte = compute_alpha(frame, params);
    ImageF rgb = params.despill_enabled ? despill(frame, matte) : frame;

    const int w = frame.width(), h = frame.height();
    std::vector<std::uint8_t> binary(static_cast<std::size_t>(w) * h, 0);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            binary[static_cast<std::size_t>(y) * w + x] = matte(x, y) >= params.matte_threshold;
        }
    }
    std::vector<long long> areas;
    std::vector<int> labels = detail::label_components(binary, w, h, areas);

    // Drop small components entirely (alpha zeroed so they cannot reappear
    // as translucent specks inside the crop).
    BoxI box;
    bool any = false;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t idx = static_cast<std::size_t>(y) * w + x;
            int label_id = labels[idx];
            if (label_id == 0) continue;
            if (areas[label_id] < params.min_component_area) {
                matte(x, y) = 0.0f;
                binary[idx] = 0;
                continue;
            }
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
    if (!any) {
        raise(ErrorKind::EmptyForeground, "no foreground component survived keying");
    }

    ForegroundAsset asset;
    asset.class_label = label;
    asset.rgba = ImageU8(static_cast<int>(box.width()), static_cast<int>(box.height()), 4);
    for (int y = box.y0; y <= box.y1; ++y) {
        for (int x = box.x0; x <= box.x1; ++x) {
            int ox = x - box.x0, oy = y - box.y0;
            asset.rgba(ox, oy, 0) = quantize8(rgb(x, y, 0));
            asset.rgba(ox, oy, 1) = quantize8(rgb(x, y, 1));
            asset.rgba(ox, oy, 2) = quantize8(rgb(x, y, 2));
            asset.rgba(ox, oy, 3) = quantize8(matte(x, y));
        }
    }
    if (rel_pose) asset.view = mocap::viewing_sample(*rel_pose, 0);
    return asset;
}

}  // namespace synthforge::keyer
