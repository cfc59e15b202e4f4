#pragma once

#include "etchpit/image.hpp"

#include <array>
#include <filesystem>
#include <vector>

namespace etchpit::io {

/// Reads an 8-bit (or 16-bit) grayscale PNG/TIFF; color inputs are converted to luminance.
GrayImage read_gray(const std::filesystem::path& path);
BinaryMask read_mask(const std::filesystem::path& path);

void write_gray_png(const std::filesystem::path& path, const GrayImage& img);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

/// Interleaved 8-bit RGB raster.
struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::array<std::uint8_t, 3>> pixels;
};
void write_rgb_png(const std::filesystem::path& path, const RgbImage& img);

}  // namespace etchpit::io
