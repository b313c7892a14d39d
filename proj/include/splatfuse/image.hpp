// Copyright Contributors to the splatfuse project
// SPDX-License-Identifier: Apache-2.0
//
// Interleaved row-major images and PNG codecs (8-bit RGB / gray, 16-bit gray).
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace splatfuse {

template <typename T>
struct Image {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<T> data;

    Image() = default;
    Image(int w, int h, int c, T fill = T{})
        : width(w), height(h), channels(c),
          data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * c, fill) {}

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }
    T &at(int x, int y, int c = 0) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    const T &at(int x, int y, int c = 0) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    bool same_shape(const Image &o) const {
        return width == o.width && height == o.height && channels == o.channels;
    }
};

using ImageU8 = Image<std::uint8_t>;
using ImageU16 = Image<std::uint16_t>;
using ImageF = Image<float>;

/// Reads an 8-bit PNG, converting palette/gray/alpha variants to `channels` (1 or 3).
ImageU8 read_png_u8(const std::filesystem::path &path, int channels);
/// Reads a 16-bit single-channel PNG.
ImageU16 read_png_u16(const std::filesystem::path &path);

void write_png(const std::filesystem::path &path, const ImageU8 &img);
void write_png(const std::filesystem::path &path, const ImageU16 &img);
std::string encode_png(const ImageU8 &img);

} // namespace splatfuse
