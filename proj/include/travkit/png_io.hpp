#pragma once

#include <png.h>

#include <array>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "travkit/errors.hpp"
#include "travkit/image.hpp"

namespace travkit {

namespace png_detail {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// write with fixed settings so identical pixels give identical file bytes
inline void write_png(const std::string& path, int height, int width, int color_type,
                      const std::vector<png_bytep>& rows) {
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw ConfigError("cannot open for writing: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error("png write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, width, height, 8, color_type, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_set_compression_level(png, 6);
    png_write_info(png, info);
    png_write_image(png, const_cast<png_bytep*>(rows.data()));
    png_write_end(png, info);
    png_destroy_write_struct(&png, &info);
}

struct Reader {
    png_structp png = nullptr;
    png_infop info = nullptr;
    FilePtr fp;
    int height = 0, width = 0;

    explicit Reader(const std::string& path) : fp(std::fopen(path.c_str(), "rb")) {
        if (!fp) throw ConfigError("cannot open for reading: " + path);
        png_byte sig[8];
        if (std::fread(sig, 1, 8, fp.get()) != 8 || png_sig_cmp(sig, 0, 8))
            throw ConfigError("not a PNG file: " + path);
        png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        info = png_create_info_struct(png);
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_read_struct(&png, &info, nullptr);
            throw Error("png read failed: " + path);
        }
        png_init_io(png, fp.get());
        png_set_sig_bytes(png, 8);
        png_read_info(png, info);
        height = static_cast<int>(png_get_image_height(png, info));
        width = static_cast<int>(png_get_image_width(png, info));
    }
    ~Reader() {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
    }
};

}  // namespace png_detail

inline void save_png_rgb(const Image<std::array<uint8_t, 3>>& img, const std::string& path) {
    std::vector<png_bytep> rows(img.height());
    for (int v = 0; v < img.height(); ++v)
        rows[v] = const_cast<png_bytep>(&img.raw()[v * img.width()][0]);
    png_detail::write_png(path, img.height(), img.width(), PNG_COLOR_TYPE_RGB, rows);
}

inline void save_png_gray(const Image<uint8_t>& img, const std::string& path) {
    std::vector<png_bytep> rows(img.height());
    for (int v = 0; v < img.height(); ++v)
        rows[v] = const_cast<png_bytep>(&img.raw()[v * img.width()]);
    png_detail::write_png(path, img.height(), img.width(), PNG_COLOR_TYPE_GRAY, rows);
}

inline Image<std::array<uint8_t, 3>> load_png_rgb(const std::string& path) {
    png_detail::Reader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw Error("png read failed: " + path);
    png_set_expand(r.png);
    png_set_strip_16(r.png);
    png_set_strip_alpha(r.png);
    png_set_gray_to_rgb(r.png);
    png_read_update_info(r.png, r.info);
    if (png_get_rowbytes(r.png, r.info) != static_cast<size_t>(r.width) * 3)
        throw ConfigError("unexpected PNG row size: " + path);
    Image<std::array<uint8_t, 3>> img(r.height, r.width, {0, 0, 0});
    std::vector<png_bytep> rows(r.height);
    for (int v = 0; v < r.height; ++v) rows[v] = &img.raw()[v * r.width][0];
    png_read_image(r.png, rows.data());
    return img;
}

inline Image<uint8_t> load_png_gray(const std::string& path) {
    png_detail::Reader r(path);
    if (setjmp(png_jmpbuf(r.png))) throw Error("png read failed: " + path);
    if (png_get_color_type(r.png, r.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(r.png, r.info) != 8)
        throw ConfigError("expected 8-bit grayscale PNG: " + path);
    png_read_update_info(r.png, r.info);
    Image<uint8_t> img(r.height, r.width, 0);
    std::vector<png_bytep> rows(r.height);
    for (int v = 0; v < r.height; ++v) rows[v] = &img.raw()[v * r.width];
    png_read_image(r.png, rows.data());
    return img;
}

}  // namespace travkit
