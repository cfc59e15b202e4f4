#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace etchpit {

struct Point {
    int x = 0;
    int y = 0;
    friend bool operator==(const Point&, const Point&) = default;
};

/// Axis-aligned box with inclusive corners (x0,y0)-(x1,y1).
struct Rect {
    int x0 = 0;
    int y0 = 0;
    int x1 = -1;
    int y1 = -1;

    int width() const { return x1 - x0 + 1; }
    int height() const { return y1 - y0 + 1; }
    bool empty() const { return x1 < x0 || y1 < y0; }
    bool contains(int x, int y) const { return x >= x0 && x <= x1 && y >= y0 && y <= y1; }
    friend bool operator==(const Rect&, const Rect&) = default;
};

/// Single-channel intensity raster, values normalized to [0,1].
class GrayImage {
public:
    GrayImage() = default;
    GrayImage(int width, int height, float fill = 0.0f);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return data_.empty(); }
    std::size_t size() const { return data_.size(); }

    float& at(int x, int y) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
    float at(int x, int y) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }

    /// Clamped access; coordinates outside the image read the nearest edge pixel.
    float at_clamped(int x, int y) const;

    std::span<float> row(int y) { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }
    std::span<const float> row(int y) const { return {data_.data() + static_cast<std::size_t>(y) * width_, static_cast<std::size_t>(width_)}; }

    std::vector<float>& data() { return data_; }
    const std::vector<float>& data() const { return data_; }

    friend bool operator==(const GrayImage&, const GrayImage&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<float> data_;
};

class BinaryMask {
public:
    BinaryMask() = default;
    BinaryMask(int width, int height, bool fill = false);

    int width() const { return width_; }
    int height() const { return height_; }
    bool empty() const { return bits_.empty(); }

    bool get(int x, int y) const { return bits_[static_cast<std::size_t>(y) * width_ + x] != 0; }
    void set(int x, int y, bool v) { bits_[static_cast<std::size_t>(y) * width_ + x] = v ? 1 : 0; }
    /// Out-of-range coordinates read as `outside`.
    bool get_or(int x, int y, bool outside) const
    {
        if (x < 0 || y < 0 || x >= width_ || y >= height_) return outside;
        return get(x, y);
    }

    std::size_t count() const;
    const std::vector<std::uint8_t>& bits() const { return bits_; }
    std::vector<std::uint8_t>& bits() { return bits_; }

    friend bool operator==(const BinaryMask&, const BinaryMask&) = default;

private:
    int width_ = 0;
    int height_ = 0;
    std::vector<std::uint8_t> bits_;
};

GrayImage crop(const GrayImage& img, const Rect& r);
BinaryMask crop(const BinaryMask& m, const Rect& r);

/// Bilinear resampling with pixel-center alignment.
GrayImage resample_bilinear(const GrayImage& img, int width, int height);

/// Counter-clockwise rotation by `quarter_turns` * 90 degrees.
GrayImage rotate90(const GrayImage& img, int quarter_turns);
BinaryMask rotate90(const BinaryMask& m, int quarter_turns);

/// 8-bit quantization used for every PNG written by the pipeline.
std::uint8_t to_u8(float v);
float from_u8(std::uint8_t v);
/// The image a PNG round trip would give back.
GrayImage quantize_u8(const GrayImage& img);

}  // namespace etchpit
