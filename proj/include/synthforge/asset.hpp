#pragma once

#include <cstdint>
#include <optional>
#include <string>

#include "synthforge/image.hpp"
#include "synthforge/mocap.hpp"

namespace synthforge {

// Where an asset came from.
struct SourceRef {
    std::string video;
    std::int64_t frame = 0;
};

// A keyed object cutout: tight RGBA crop with straight (non-premultiplied)
// alpha, plus its class and optional viewing geometry.
struct ForegroundAsset {
    std::string id;
    std::string class_label;
    ImageU8 rgba;  // 4 channels
    std::optional<mocap::ViewSample> view;
    SourceRef source;
};

}  // namespace synthforge
