#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "wsd/geometry.hpp"

namespace wsd::data {

/// 8-bit RGB image, interleaved, row-major.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;

    Image() = default;
    Image(int w, int h, std::uint8_t fill = 0)
        : width(w), height(h), pixels(static_cast<std::size_t>(w) * h * 3, fill) {}

    std::uint8_t& at(int x, int y, int c) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    std::uint8_t at(int x, int y, int c) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + c];
    }
    bool empty() const { return pixels.empty(); }

    friend bool operator==(const Image&, const Image&) = default;
};

/// Binary PPM (P6, maxval 255).
Image read_ppm(const std::filesystem::path& path);
void write_ppm(const Image& image, const std::filesystem::path& path);

/// Bilinear resampling of `window` (source pixel coordinates) onto an
/// out_width x out_height raster. Pixel centers sit at half-integers.
Image resample(const Image& src, const Box& window, int out_width, int out_height);

}  // namespace wsd::data
