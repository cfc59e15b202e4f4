#include "etchpit/image.hpp"

#include <algorithm>
#include <cmath>

namespace etchpit {

GrayImage::GrayImage(int width, int height, float fill)
    : width_(width), height_(height), data_(static_cast<std::size_t>(width) * height, fill)
{
}

float GrayImage::at_clamped(int x, int y) const
{
    x = std::clamp(x, 0, width_ - 1);
    y = std::clamp(y, 0, height_ - 1);
    return at(x, y);
}

BinaryMask::BinaryMask(int width, int height, bool fill)
    : width_(width), height_(height), bits_(static_cast<std::size_t>(width) * height, fill ? 1 : 0)
{
}

std::size_t BinaryMask::count() const
{
    return static_cast<std::size_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

GrayImage crop(const GrayImage& img, const Rect& r)
{
    GrayImage out(r.width(), r.height());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out.at(x, y) = img.at(r.x0 + x, r.y0 + y);
    return out;
}

BinaryMask crop(const BinaryMask& m, const Rect& r)
{
    BinaryMask out(r.width(), r.height());
    for (int y = 0; y < out.height(); ++y)
        for (int x = 0; x < out.width(); ++x)
            out.set(x, y, m.get(r.x0 + x, r.y0 + y));
    return out;
}

GrayImage resample_bilinear(const GrayImage& img, int width, int height)
{
    GrayImage out(width, height);
    if (img.empty()) return out;
    const double sx = static_cast<double>(img.width()) / width;
    const double sy = static_cast<double>(img.height()) / height;
    for (int y = 0; y < height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
        const int y0 = static_cast<int>(std::floor(fy));
        const int y1 = std::min(y0 + 1, img.height() - 1);
        const double wy = fy - y0;
        for (int x = 0; x < width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
            const int x0 = static_cast<int>(std::floor(fx));
            const int x1 = std::min(x0 + 1, img.width() - 1);
            const double wx = fx - x0;
            const double top = img.at(x0, y0) * (1.0 - wx) + img.at(x1, y0) * wx;
            const double bot = img.at(x0, y1) * (1.0 - wx) + img.at(x1, y1) * wx;
            out.at(x, y) = static_cast<float>(top * (1.0 - wy) + bot * wy);
        }
    }
    return out;
}

namespace {

template <class Raster, class Get, class Set>
Raster rotate_impl(const Raster& src, int quarter_turns, Get get, Set set)
{
    const int q = ((quarter_turns % 4) + 4) % 4;
    const int w = src.width();
    const int h = src.height();
    Raster out = (q % 2 == 0) ? Raster(w, h) : Raster(h, w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            int nx = x;
            int ny = y;
            switch (q) {
            case 1: nx = y; ny = w - 1 - x; break;
            case 2: nx = w - 1 - x; ny = h - 1 - y; break;
            case 3: nx = h - 1 - y; ny = x; break;
            default: break;
            }
            set(out, nx, ny, get(src, x, y));
        }
    }
    return out;
}

}  // namespace

GrayImage rotate90(const GrayImage& img, int quarter_turns)
{
    return rotate_impl(
        img, quarter_turns, [](const GrayImage& s, int x, int y) { return s.at(x, y); },
        [](GrayImage& d, int x, int y, float v) { d.at(x, y) = v; });
}

BinaryMask rotate90(const BinaryMask& m, int quarter_turns)
{
    return rotate_impl(
        m, quarter_turns, [](const BinaryMask& s, int x, int y) { return s.get(x, y); },
        [](BinaryMask& d, int x, int y, bool v) { d.set(x, y, v); });
}

std::uint8_t to_u8(float v)
{
    return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

float from_u8(std::uint8_t v) { return static_cast<float>(v) / 255.0f; }

GrayImage quantize_u8(const GrayImage& img)
{
    GrayImage out = img;
    for (float& v : out.data()) v = from_u8(to_u8(v));
    return out;
}

}  // namespace etchpit
