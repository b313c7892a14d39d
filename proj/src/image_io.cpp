// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0

#include "splatfuse/image.hpp"

#include <cstdio>
#include <memory>

#include <png.h>

#include "splatfuse/common.hpp"

namespace splatfuse {
namespace {

struct FileCloser {
    void operator()(std::FILE *f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const std::filesystem::path &path, const char *mode) {
    FilePtr f(std::fopen(path.c_str(), mode));
    if (!f) {
        fail_io("cannot open " + path.string());
    }
    return f;
}

struct PngImage {
    png_image image{};
    PngImage() { image.version = PNG_IMAGE_VERSION; }
    ~PngImage() { png_image_free(&image); }
};

template <typename T>
void write_impl(const std::filesystem::path &path, const Image<T> &img, png_uint_32 format) {
    PngImage png;
    png.image.width = static_cast<png_uint_32>(img.width);
    png.image.height = static_cast<png_uint_32>(img.height);
    png.image.format = format;
    auto f = open_file(path, "wb");
    if (!png_image_write_to_stdio(&png.image, f.get(), 0, img.data.data(), 0, nullptr)) {
        fail_io("failed to write PNG " + path.string() + ": " + png.image.message);
    }
}

void write_rows(png_structp png, png_bytep data, png_size_t length) {
    auto *sink = static_cast<std::string *>(png_get_io_ptr(png));
    sink->append(reinterpret_cast<const char *>(data), length);
}

void flush_rows(png_structp) {}

} // namespace

ImageU8 read_png_u8(const std::filesystem::path &path, int channels) {
    if (channels != 1 && channels != 3) {
        fail("read_png_u8: channels must be 1 or 3");
    }
    PngImage png;
    if (!png_image_begin_read_from_file(&png.image, path.c_str())) {
        fail_io("cannot read PNG " + path.string() + ": " + png.image.message);
    }
    png.image.format = channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
    ImageU8 img(static_cast<int>(png.image.width), static_cast<int>(png.image.height), channels);
    if (!png_image_finish_read(&png.image, nullptr, img.data.data(), 0, nullptr)) {
        fail_io("cannot decode PNG " + path.string() + ": " + png.image.message);
    }
    return img;
}

ImageU16 read_png_u16(const std::filesystem::path &path) {
    // The simplified API only emits linear 16-bit data, so use the classic reader to keep
    // the stored millimetre values untouched.
    auto f = open_file(path, "rb");
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_io("libpng initialisation failed");
    }
    ImageU16 img;
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_io("cannot decode 16-bit PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_read_info(png, info);
    const auto width = png_get_image_width(png, info);
    const auto height = png_get_image_height(png, info);
    const auto depth = png_get_bit_depth(png, info);
    const auto color = png_get_color_type(png, info);
    if (depth != 16 || color != PNG_COLOR_TYPE_GRAY) {
        png_destroy_read_struct(&png, &info, nullptr);
        fail_io(path.string() + " is not a 16-bit grayscale PNG");
    }
    png_set_swap(png);
    img = ImageU16(static_cast<int>(width), static_cast<int>(height), 1);
    std::vector<png_bytep> rows(height);
    for (png_uint_32 y = 0; y < height; ++y) {
        rows[y] = reinterpret_cast<png_bytep>(img.data.data() + static_cast<std::size_t>(y) * width);
    }
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

void write_png(const std::filesystem::path &path, const ImageU8 &img) {
    if (img.channels != 1 && img.channels != 3) {
        fail("write_png: 8-bit images must have 1 or 3 channels");
    }
    write_impl(path, img, img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY);
}

void write_png(const std::filesystem::path &path, const ImageU16 &img) {
    if (img.channels != 1) {
        fail("write_png: 16-bit images must have one channel");
    }
    auto f = open_file(path, "wb");
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail_io("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail_io("failed to write PNG " + path.string());
    }
    png_init_io(png, f.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 16, PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    png_set_swap(png);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, reinterpret_cast<png_const_bytep>(img.data.data() +
                                                             static_cast<std::size_t>(y) * img.width));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::string encode_png(const ImageU8 &img) {
    if (img.channels != 1 && img.channels != 3) {
        fail("encode_png: 8-bit images must have 1 or 3 channels");
    }
    std::string out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, &info);
        fail_io("libpng initialisation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        fail_io("PNG encoding failed");
    }
    png_set_write_fn(png, &out, write_rows, flush_rows);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height),
                 8, img.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    const std::size_t stride = static_cast<std::size_t>(img.width) * img.channels;
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, img.data.data() + y * stride);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

} // namespace splatfuse
