#include "xcat/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace xcat {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

}  // namespace

Tensor<std::uint8_t> load_png(const std::string& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw FormatError("cannot open: " + path);

    png_byte header[8];
    if (std::fread(header, 1, 8, fp.get()) != 8 || png_sig_cmp(header, 0, 8) != 0)
        throw FormatError("not a PNG file: " + path);

    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("corrupt PNG: " + path);
    }
    png_init_io(png, fp.get());
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);

    const int depth = png_get_bit_depth(png, info);
    const int ctype = png_get_color_type(png, info);
    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));

    if (depth != 8) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": unsupported bit depth " + std::to_string(depth) +
                          " (only 8-bit supported)");
    }
    if (ctype != PNG_COLOR_TYPE_RGB && ctype != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError(path + ": unsupported colour type " + std::to_string(ctype) +
                          " (only 8-bit RGB or grayscale supported)");
    }
    png_read_update_info(png, info);

    const int ch = ctype == PNG_COLOR_TYPE_RGB ? 3 : 1;
    std::vector<png_byte> rowbuf(static_cast<std::size_t>(width) * ch);
    Tensor<std::uint8_t> t(1, height, width, 3);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, rowbuf.data(), nullptr);
        for (int x = 0; x < width; ++x)
            for (int c = 0; c < 3; ++c)
                t(0, y, x, c) = rowbuf[static_cast<std::size_t>(x) * ch + (ch == 3 ? c : 0)];
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return t;
}

void save_png(const Tensor<std::uint8_t>& t, const std::string& path) {
    if (t.n() != 1 || t.c() != 3)
        throw std::invalid_argument("save_png: expected a (1, h, w, 3) tensor, got " +
                                    t.shape().str());
    FilePtr fp(std::fopen(path.c_str(), "wb"));
    if (!fp) throw FormatError("cannot open for writing: " + path);

    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw FormatError("PNG write failed: " + path);
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(t.w()), static_cast<png_uint_32>(t.h()),
                 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);

    std::vector<png_byte> rowbuf(static_cast<std::size_t>(t.w()) * 3);
    for (int y = 0; y < t.h(); ++y) {
        for (int x = 0; x < t.w(); ++x)
            for (int c = 0; c < 3; ++c)
                rowbuf[static_cast<std::size_t>(x) * 3 + c] = t(0, y, x, c);
        png_write_row(png, rowbuf.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

Tensor<float> load_png_f32(const std::string& path) {
    const auto u = load_png(path);
    Tensor<float> t(u.shape());
    for (std::int64_t i = 0; i < u.size(); ++i)
        t.data()[static_cast<std::size_t>(i)] =
            static_cast<float>(u.data()[static_cast<std::size_t>(i)]) / 255.0f;
    return t;
}

void save_png_f32(const Tensor<float>& t, const std::string& path) {
    Tensor<std::uint8_t> u(t.shape());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const float v = std::clamp(t.data()[static_cast<std::size_t>(i)], 0.0f, 1.0f);
        u.data()[static_cast<std::size_t>(i)] =
            static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
    save_png(u, path);
}

}  // namespace xcat
