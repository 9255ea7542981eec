#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

#include "gbil/core.hpp"

namespace gbil {

// RGB image, row-major, values in linear [0,1] on load (8-bit / 255, no
// gamma handling). Rendered images may exceed [0,1]; writers clamp.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<double> data;  // W*H*3, channels innermost

    Image() = default;
    Image(int w, int h, double fill = 0.0)
        : width(w), height(h), data(static_cast<std::size_t>(w) * h * 3, fill) {}

    double& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
};

struct ImageIoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline Image image_from_render(const RenderOutput& out) {
    Image img(out.width, out.height);
    img.data = out.color;
    return img;
}

namespace detail {

struct FileCloser {
    std::FILE* f = nullptr;
    ~FileCloser() {
        if (f) std::fclose(f);
    }
};

}  // namespace detail

inline Image load_png(const std::string& path) {
    detail::FileCloser file{std::fopen(path.c_str(), "rb")};
    if (!file.f) throw ImageIoError("cannot open image: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, file.f) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw ImageIoError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw ImageIoError("libpng init failed");
    }
    std::vector<png_bytep> row_ptrs;
    std::vector<png_byte> pixels;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("PNG decode failed: " + path);
    }

    png_init_io(png, file.f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const png_byte color_type = png_get_color_type(png, info);
    if (color_type & PNG_COLOR_MASK_ALPHA)
        std::fprintf(stderr, "warning: %s has an alpha channel; ignoring it\n", path.c_str());

    // Normalize everything to 8-bit RGB.
    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int w = static_cast<int>(png_get_image_width(png, info));
    const int h = static_cast<int>(png_get_image_height(png, info));
    const std::size_t row_bytes = png_get_rowbytes(png, info);
    if (row_bytes != static_cast<std::size_t>(w) * 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw ImageIoError("unexpected PNG layout: " + path);
    }

    pixels.resize(static_cast<std::size_t>(h) * row_bytes);
    row_ptrs.resize(h);
    for (int y = 0; y < h; ++y) row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * row_bytes;
    png_read_image(png, row_ptrs.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);

    Image img(w, h);
    for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = pixels[i] / 255.0;
    return img;
}

inline void save_png(const std::string& path, const Image& img) {
    if (img.width < 1 || img.height < 1) throw ImageIoError("save_png: empty image");
    detail::FileCloser file{std::fopen(path.c_str(), "wb")};
    if (!file.f) throw ImageIoError("cannot write image: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw ImageIoError("libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_write_struct(&png, nullptr);
        throw ImageIoError("libpng init failed");
    }
    std::vector<png_byte> pixels(img.data.size());
    std::vector<png_bytep> row_ptrs(img.height);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw ImageIoError("PNG encode failed: " + path);
    }

    for (std::size_t i = 0; i < img.data.size(); ++i) {
        const double v = std::clamp(img.data[i], 0.0, 1.0);
        pixels[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    for (int y = 0; y < img.height; ++y)
        row_ptrs[y] = pixels.data() + static_cast<std::size_t>(y) * img.width * 3;

    png_init_io(png, file.f);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_write_image(png, row_ptrs.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

}  // namespace gbil
