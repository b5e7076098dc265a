#pragma once

#include <png.h>

#include <cstdio>
#include <filesystem>
#include <string>
#include <vector>

#include "anml/common.hpp"

namespace anml {

// Grayscale image with values in [0,1].
struct Image {
    int64_t height = 0;
    int64_t width = 0;
    std::vector<float> pixels;

    float at(int64_t y, int64_t x) const { return pixels[static_cast<size_t>(y * width + x)]; }
};

namespace detail {

struct PngReadCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* file = nullptr;
    ~PngReadCloser() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (file) std::fclose(file);
    }
};

struct PngWriteCloser {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FILE* file = nullptr;
    ~PngWriteCloser() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (file) std::fclose(file);
    }
};

}  // namespace detail

// Decodes a PNG to 8-bit grayscale scaled to [0,1]. Color and alpha inputs
// are converted.
inline Image read_png_gray(const std::filesystem::path& path) {
    detail::PngReadCloser c;
    c.file = std::fopen(path.string().c_str(), "rb");
    if (!c.file) throw DataError("cannot open image " + path.string());

    unsigned char sig[8];
    if (std::fread(sig, 1, 8, c.file) != 8 || png_sig_cmp(sig, 0, 8))
        throw DataError("not a PNG file: " + path.string());

    c.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!c.png) throw DataError("libpng init failed for " + path.string());
    c.info = png_create_info_struct(c.png);
    if (!c.info) throw DataError("libpng info init failed for " + path.string());
    if (setjmp(png_jmpbuf(c.png))) throw DataError("corrupt PNG: " + path.string());

    png_init_io(c.png, c.file);
    png_set_sig_bytes(c.png, 8);
    png_read_info(c.png, c.info);

    png_set_expand(c.png);
    png_set_strip_16(c.png);
    png_set_strip_alpha(c.png);
    const png_byte color = png_get_color_type(c.png, c.info);
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA ||
        color == PNG_COLOR_TYPE_PALETTE)
        png_set_rgb_to_gray_fixed(c.png, 1, -1, -1);
    png_read_update_info(c.png, c.info);

    const png_uint_32 h = png_get_image_height(c.png, c.info);
    const png_uint_32 w = png_get_image_width(c.png, c.info);
    std::vector<unsigned char> rowbuf(png_get_rowbytes(c.png, c.info));

    Image img;
    img.height = h;
    img.width = w;
    img.pixels.resize(static_cast<size_t>(h) * w);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(c.png, rowbuf.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            img.pixels[static_cast<size_t>(y) * w + x] = static_cast<float>(rowbuf[x]) / 255.0f;
    }
    png_read_end(c.png, nullptr);
    return img;
}

inline void write_png_gray(const std::filesystem::path& path, const Image& img) {
    detail::PngWriteCloser c;
    c.file = std::fopen(path.string().c_str(), "wb");
    if (!c.file) throw IoError("cannot write image " + path.string());
    c.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!c.png) throw IoError("libpng init failed for " + path.string());
    c.info = png_create_info_struct(c.png);
    if (!c.info) throw IoError("libpng info init failed for " + path.string());
    if (setjmp(png_jmpbuf(c.png))) throw IoError("png write failed: " + path.string());

    png_init_io(c.png, c.file);
    png_set_IHDR(c.png, c.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(c.png, c.info);
    std::vector<unsigned char> row(static_cast<size_t>(img.width));
    for (int64_t y = 0; y < img.height; ++y) {
        for (int64_t x = 0; x < img.width; ++x) {
            float v = img.at(y, x);
            v = v < 0.0f ? 0.0f : (v > 1.0f ? 1.0f : v);
            row[static_cast<size_t>(x)] = static_cast<unsigned char>(v * 255.0f + 0.5f);
        }
        png_write_row(c.png, row.data());
    }
    png_write_end(c.png, nullptr);
}

// Bilinear resample to size x size.
inline Image resize_bilinear(const Image& src, int64_t size) {
    if (src.height <= 0 || src.width <= 0) throw DataError("resize of empty image");
    Image out;
    out.height = size;
    out.width = size;
    out.pixels.resize(static_cast<size_t>(size) * size);
    const float sy = static_cast<float>(src.height) / static_cast<float>(size);
    const float sx = static_cast<float>(src.width) / static_cast<float>(size);
    for (int64_t y = 0; y < size; ++y) {
        const float fy = (static_cast<float>(y) + 0.5f) * sy - 0.5f;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        const float wy = fy - static_cast<float>(y0);
        int64_t y1 = y0 + 1;
        y0 = std::max<int64_t>(0, std::min(y0, src.height - 1));
        y1 = std::max<int64_t>(0, std::min(y1, src.height - 1));
        for (int64_t x = 0; x < size; ++x) {
            const float fx = (static_cast<float>(x) + 0.5f) * sx - 0.5f;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            const float wx = fx - static_cast<float>(x0);
            int64_t x1 = x0 + 1;
            x0 = std::max<int64_t>(0, std::min(x0, src.width - 1));
            x1 = std::max<int64_t>(0, std::min(x1, src.width - 1));
            const float top = src.at(y0, x0) * (1.0f - wx) + src.at(y0, x1) * wx;
            const float bot = src.at(y1, x0) * (1.0f - wx) + src.at(y1, x1) * wx;
            out.pixels[static_cast<size_t>(y * size + x)] = top * (1.0f - wy) + bot * wy;
        }
    }
    return out;
}

// ink = 1: Omniglot draws black strokes on white paper.
inline Image invert(Image img) {
    for (auto& v : img.pixels) v = 1.0f - v;
    return img;
}

}  // namespace anml
