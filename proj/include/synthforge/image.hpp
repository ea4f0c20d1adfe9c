#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <vector>

#include "synthforge/error.hpp"

namespace synthforge {

// Interleaved row-major raster. Channel counts used here: 1 (gray/alpha),
// 3 (RGB), 4 (RGBA, straight alpha).
template <typename T>
class Image {
public:
    Image() = default;
    Image(int width, int height, int channels, T fill = T{})
        : w_(width), h_(height), c_(channels),
          data_(static_cast<std::size_t>(width) * height * channels, fill) {
        if (width <= 0 || height <= 0 || channels <= 0) {
            raise(ErrorKind::InvalidInput, "image dimensions must be positive");
        }
    }

    int width() const { return w_; }
    int height() const { return h_; }
    int channels() const { return c_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    T& operator()(int x, int y, int ch = 0) {
        return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + ch];
    }
    const T& operator()(int x, int y, int ch = 0) const {
        return data_[(static_cast<std::size_t>(y) * w_ + x) * c_ + ch];
    }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }
    T* row(int y) { return data_.data() + static_cast<std::size_t>(y) * w_ * c_; }
    const T* row(int y) const { return data_.data() + static_cast<std::size_t>(y) * w_ * c_; }

    bool same_shape(const Image& other) const {
        return w_ == other.w_ && h_ == other.h_ && c_ == other.c_;
    }

    friend bool operator==(const Image& a, const Image& b) {
        return a.w_ == b.w_ && a.h_ == b.h_ && a.c_ == b.c_ && a.data_ == b.data_;
    }

private:
    int w_ = 0, h_ = 0, c_ = 0;
    std::vector<T> data_;
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF = Image<float>;

inline float clamp01(float v) { return std::min(1.0f, std::max(0.0f, v)); }

// Round-half-up quantization to 8 bits.
inline std::uint8_t quantize8(float v) {
    return static_cast<std::uint8_t>(std::lround(clamp01(v) * 255.0f));
}

inline ImageF to_float(const ImageU8& src) {
    ImageF out(src.width(), src.height(), src.channels());
    const std::uint8_t* in = src.data();
    float* dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = in[i] * (1.0f / 255.0f);
    return out;
}

inline ImageF to_float(const ImageU16& src) {
    ImageF out(src.width(), src.height(), src.channels());
    const std::uint16_t* in = src.data();
    float* dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = in[i] * (1.0f / 65535.0f);
    return out;
}

inline ImageU8 to_u8(const ImageF& src) {
    ImageU8 out(src.width(), src.height(), src.channels());
    const float* in = src.data();
    std::uint8_t* dst = out.data();
    for (std::size_t i = 0; i < src.size(); ++i) dst[i] = quantize8(in[i]);
    return out;
}

// Inclusive integer pixel box. Annotation boxes use this convention.
struct BoxI {
    int x0 = 0, y0 = 0, x1 = -1, y1 = -1;  // empty by default

    bool valid() const { return x1 >= x0 && y1 >= y0; }
    long long width() const { return static_cast<long long>(x1) - x0 + 1; }
    long long height() const { return static_cast<long long>(y1) - y0 + 1; }
    long long area() const { return valid() ? width() * height() : 0; }

    friend bool operator==(const BoxI&, const BoxI&) = default;
};

// Continuous box, max-exclusive ([x0, x1) x [y0, y1)). Detection metrics and
// COCO-style interchange use this convention.
struct BoxF {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return std::max(0.0, width()) * std::max(0.0, height()); }

    friend bool operator==(const BoxF&, const BoxF&) = default;
};

inline BoxF to_boxf(const BoxI& b) {
    return BoxF{static_cast<double>(b.x0), static_cast<double>(b.y0),
                static_cast<double>(b.x1) + 1.0, static_cast<double>(b.y1) + 1.0};
}

inline double intersection_area(const BoxF& a, const BoxF& b) {
    double w = std::min(a.x1, b.x1) - std::max(a.x0, b.x0);
    double h = std::min(a.y1, b.y1) - std::max(a.y0, b.y0);
    if (w <= 0.0 || h <= 0.0) return 0.0;
    return w * h;
}

// IoU on continuous boxes; shared by the compositor's overlap rejection and
// the detection metrics. Identical degenerate boxes count as 0 overlap.
inline double iou(const BoxF& a, const BoxF& b) {
    double inter = intersection_area(a, b);
    double uni = a.area() + b.area() - inter;
    if (uni <= 0.0) return 0.0;
    return inter / uni;
}

}  // namespace synthforge
