#pragma once

#include <bit>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include "synthforge/error.hpp"
#include "synthforge/image.hpp"

namespace synthforge {

namespace detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

inline FilePtr open_file(const std::string& path, const char* mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) raise(ErrorKind::Io, "cannot open " + path);
    return f;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

inline void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

}  // namespace detail

inline bool has_png_signature(const std::string& path) {
    detail::FilePtr f(std::fopen(path.c_str(), "rb"));
    if (!f) return false;
    unsigned char sig[8] = {};
    if (std::fread(sig, 1, 8, f.get()) != 8) return false;
    return png_sig_cmp(sig, 0, 8) == 0;
}

// Decoded PNG with its native bit depth preserved. Palette and gray images
// are expanded; channel count is whatever the file carries (1, 3 or 4 after
// expansion; gray+alpha becomes RGBA).
struct DecodedPng {
    ImageU8 u8;    // valid when bit_depth == 8
    ImageU16 u16;  // valid when bit_depth == 16
    int bit_depth = 0;
};

inline DecodedPng load_png(const std::string& path) {
    detail::FilePtr f = detail::open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(ErrorKind::Io, "png_create_read_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        raise(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        raise(ErrorKind::Format, "failed to decode PNG " + path);
    }
    png_init_io(png, f.get());
    png_read_info(png, info);

    png_set_palette_to_rgb(png);
    png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (png_get_color_type(png, info) == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
    if (png_get_bit_depth(png, info) == 16 && std::endian::native == std::endian::little) {
        png_set_swap(png);
    }
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    const int channels = static_cast<int>(png_get_channels(png, info));
    const int depth = static_cast<int>(png_get_bit_depth(png, info));

    DecodedPng out;
    out.bit_depth = depth;
    std::vector<png_bytep> rows(height);
    if (depth == 16) {
        out.u16 = ImageU16(width, height, channels);
        for (int y = 0; y < height; ++y) {
            rows[y] = reinterpret_cast<png_bytep>(out.u16.row(y));
        }
    } else {
        out.u8 = ImageU8(width, height, channels);
        for (int y = 0; y < height; ++y) rows[y] = out.u8.row(y);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return out;
}

inline void save_png(const std::string& path, const ImageU8& image) {
    int color_type;
    switch (image.channels()) {
        case 1: color_type = PNG_COLOR_TYPE_GRAY; break;
        case 3: color_type = PNG_COLOR_TYPE_RGB; break;
        case 4: color_type = PNG_COLOR_TYPE_RGBA; break;
        default: raise(ErrorKind::InvalidInput, "unsupported channel count for PNG write");
    }
    detail::FilePtr f = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        raise(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorKind::Io, "failed to write PNG " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.width(), image.height(), 8, color_type,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < image.height(); ++y) {
        png_write_row(png, const_cast<png_bytep>(image.row(y)));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

// 16-bit single-channel PNG (instance masks).
inline void save_png16(const std::string& path, const ImageU16& image) {
    if (image.channels() != 1) {
        raise(ErrorKind::InvalidInput, "16-bit PNG write expects a single channel");
    }
    detail::FilePtr f = detail::open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) raise(ErrorKind::Io, "png_create_write_struct failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        raise(ErrorKind::Io, "png_create_info_struct failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        raise(ErrorKind::Io, "failed to write PNG " + path);
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, image.width(), image.height(), 16, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    if (std::endian::native == std::endian::little) png_set_swap(png);
    for (int y = 0; y < image.height(); ++y) {
        png_write_row(png, reinterpret_cast<png_bytep>(const_cast<std::uint16_t*>(image.row(y))));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

inline ImageU8 load_jpeg(const std::string& path) {
    detail::FilePtr f = detail::open_file(path, "rb");
    jpeg_decompress_struct cinfo;
    detail::JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = detail::jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        raise(ErrorKind::Format, "failed to decode JPEG " + path);
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, f.get());
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);

    ImageU8 out(static_cast<int>(cinfo.output_width), static_cast<int>(cinfo.output_height), 3);
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = out.row(static_cast<int>(cinfo.output_scanline));
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return out;
}

namespace detail {

inline ImageF convert_channels(const ImageF& src, int want) {
    if (src.channels() == want) return src;
    ImageF out(src.width(), src.height(), want);
    for (int y = 0; y < src.height(); ++y) {
        for (int x = 0; x < src.width(); ++x) {
            float r, g, b, a = 1.0f;
            if (src.channels() == 1) {
                r = g = b = src(x, y, 0);
            } else {
                r = src(x, y, 0);
                g = src(x, y, 1);
                b = src(x, y, 2);
                if (src.channels() == 4) a = src(x, y, 3);
            }
            if (want == 1) {
                out(x, y, 0) = (r + g + b) / 3.0f;
            } else {
                out(x, y, 0) = r;
                out(x, y, 1) = g;
                out(x, y, 2) = b;
                if (want == 4) out(x, y, 3) = a;
            }
        }
    }
    return out;
}

}  // namespace detail

// Load a PNG (8- or 16-bit) or JPEG as floats in [0,1], converted to the
// requested channel count (1, 3 or 4).
inline ImageF load_image(const std::string& path, int channels) {
    ImageF raw;
    if (has_png_signature(path)) {
        DecodedPng decoded = load_png(path);
        raw = decoded.bit_depth == 16 ? to_float(decoded.u16) : to_float(decoded.u8);
    } else {
        raw = to_float(load_jpeg(path));
    }
    return detail::convert_channels(raw, channels);
}

}  // namespace synthforge
