#include "etchpit/pitgen.hpp"

#include "etchpit/coco.hpp"
#include "etchpit/error.hpp"
#include "etchpit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

namespace etchpit::pitgen {

namespace {

constexpr double kPixelNoise = 0.012;

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }

void add_noise(GrayImage& img, std::mt19937_64& rng, double sigma)
{
    std::normal_distribution<double> nd(0.0, sigma);
    for (float& v : img.data()) v = std::clamp(static_cast<float>(v + nd(rng)), 0.0f, 1.0f);
}

}  // namespace

PitShape random_pit(PitType type, double cx, double cy, std::mt19937_64& rng)
{
    PitShape p;
    p.type = type;
    p.cx = cx;
    p.cy = cy;
    p.level = uniform(rng, 0.18, 0.26);
    p.core_level = uniform(rng, 0.05, 0.10);
    switch (type) {
    case PitType::TED: {
        const double r = uniform(rng, 4.5, 6.0);
        p.a = r;
        p.b = r * uniform(rng, 0.93, 1.0);
        p.angle = uniform(rng, 0.0, std::numbers::pi);
        p.core_radius = uniform(rng, 1.2, 1.8);
        break;
    }
    case PitType::TSD: {
        const double r = uniform(rng, 9.0, 12.0);
        p.a = r;
        p.b = r * uniform(rng, 0.93, 1.0);
        p.angle = uniform(rng, 0.0, std::numbers::pi);
        p.core_radius = uniform(rng, 2.5, 3.5);
        break;
    }
    case PitType::BPD: {
        p.a = uniform(rng, 8.0, 10.5);
        p.b = p.a / uniform(rng, 2.0, 2.4);
        p.angle = uniform(rng, -10.0, 10.0) * std::numbers::pi / 180.0;
        p.core_radius = uniform(rng, 1.2, 1.8);
        p.core_shift = uniform(rng, -0.65, -0.45);
        p.egg = uniform(rng, 0.15, 0.3);
        break;
    }
    }
    return p;
}

double pit_extent(const PitShape& p) { return p.a * (1.0 + p.egg) + 1.5; }

GrayImage background(int width, int height, std::mt19937_64& rng, double level)
{
    GrayImage img(width, height, static_cast<float>(level));
    // A few slow plane waves give the field some structure.
    for (int k = 0; k < 4; ++k) {
        const double fx = uniform(rng, -0.05, 0.05), fy = uniform(rng, -0.05, 0.05);
        const double phase = uniform(rng, 0.0, 2 * std::numbers::pi), amp = uniform(rng, 0.005, 0.015);
        for (int y = 0; y < height; ++y)
            for (int x = 0; x < width; ++x) img.at(x, y) += static_cast<float>(amp * std::sin(fx * x + fy * y + phase));
    }
    add_noise(img, rng, kPixelNoise);
    return img;
}

void render_pit(GrayImage& img, const PitShape& p)
{
    const double ext = pit_extent(p) + 1.0;
    const int x0 = std::max(0, static_cast<int>(std::floor(p.cx - ext)));
    const int x1 = std::min(img.width() - 1, static_cast<int>(std::ceil(p.cx + ext)));
    const int y0 = std::max(0, static_cast<int>(std::floor(p.cy - ext)));
    const int y1 = std::min(img.height() - 1, static_cast<int>(std::ceil(p.cy + ext)));
    const double c = std::cos(p.angle), s = std::sin(p.angle);
    const double core_x = p.cx + c * p.core_shift * p.a, core_y = p.cy + s * p.core_shift * p.a;
    for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
            const double dx = x - p.cx, dy = y - p.cy;
            const double u = dx * c + dy * s, v = -dx * s + dy * c;
            const double bb = p.b * std::max(0.3, 1.0 + p.egg * u / p.a);
            const double rho = std::hypot(u / p.a, v / bb);
            const double cover = std::clamp((1.0 - rho) * std::min(p.a, bb) + 0.5, 0.0, 1.0);
            if (cover <= 0) continue;
            double inner = p.level + 0.25 * (0.72 - p.level) * std::min(1.0, rho * rho);
            const double dc = std::hypot(x - core_x, y - core_y);
            const double cf = std::clamp(p.core_radius - dc + 0.5, 0.0, 1.0);
            inner = inner * (1.0 - cf) + p.core_level * cf;
            const double bg = img.at(x, y);
            img.at(x, y) = static_cast<float>(std::min(bg, bg * (1.0 - cover) + inner * cover));
        }
    }
}

PitSample pit_patch(PitType type, std::mt19937_64& rng, int margin)
{
    PitShape shape = random_pit(type, 0, 0, rng);
    const int half = static_cast<int>(std::ceil(pit_extent(shape))) + margin;
    const int side = 2 * half + 1;
    shape.cx = half + uniform(rng, -0.5, 0.5);
    shape.cy = half + uniform(rng, -0.5, 0.5);
    PitSample out;
    out.image = background(side, side, rng);
    render_pit(out.image, shape);
    add_noise(out.image, rng, kPixelNoise / 2);
    out.type = type;
    out.shape = shape;
    return out;
}

std::vector<PitSample> pit_library(int per_type, std::uint64_t seed, int margin)
{
    std::mt19937_64 rng(seed);
    std::vector<PitSample> out;
    out.reserve(static_cast<std::size_t>(per_type) * 3);
    for (int i = 0; i < per_type; ++i)
        for (PitType t : kPitTypes) out.push_back(pit_patch(t, rng, margin));
    return out;
}

std::vector<QualitySample> single_vs_double(int per_class, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, 2);
    std::vector<QualitySample> out;
    out.reserve(static_cast<std::size_t>(per_class) * 2);
    for (int i = 0; i < per_class; ++i) {
        for (int label : {1, 0}) {
            std::vector<PitShape> pits{random_pit(kPitTypes[pick(rng)], 0, 0, rng)};
            if (label == 0) {
                PitShape second = random_pit(kPitTypes[pick(rng)], 0, 0, rng);
                const double d = (pits[0].a + second.a) * uniform(rng, 0.55, 0.9);
                const double phi = uniform(rng, 0.0, 2 * std::numbers::pi);
                second.cx = d * std::cos(phi);
                second.cy = d * std::sin(phi);
                pits.push_back(second);
            }
            double lo_x = 1e9, lo_y = 1e9, hi_x = -1e9, hi_y = -1e9;
            for (const auto& p : pits) {
                const double e = pit_extent(p);
                lo_x = std::min(lo_x, p.cx - e);
                hi_x = std::max(hi_x, p.cx + e);
                lo_y = std::min(lo_y, p.cy - e);
                hi_y = std::max(hi_y, p.cy + e);
            }
            const int w = static_cast<int>(std::ceil(hi_x - lo_x)) + 20;
            const int h = static_cast<int>(std::ceil(hi_y - lo_y)) + 20;
            QualitySample s;
            s.image = background(w, h, rng);
            for (auto p : pits) {
                p.cx += 10 - lo_x;
                p.cy += 10 - lo_y;
                render_pit(s.image, p);
            }
            s.label = label;
            out.push_back(std::move(s));
        }
    }
    return out;
}

TileTruth wafer_tile(int width, int height, int n_pits, double shading, std::mt19937_64& rng)
{
    TileTruth t;
    t.image = background(width, height, rng);
    std::uniform_int_distribution<int> pick(0, 2);
    for (int i = 0; i < n_pits; ++i) {
        PitShape p = random_pit(kPitTypes[pick(rng)], 0, 0, rng);
        const double e = pit_extent(p) + 2.0;
        bool placed = false;
        for (int attempt = 0; attempt < 200 && !placed; ++attempt) {
            p.cx = uniform(rng, e, width - 1 - e);
            p.cy = uniform(rng, e, height - 1 - e);
            placed = std::all_of(t.pits.begin(), t.pits.end(), [&](const PitShape& q) {
                return std::hypot(p.cx - q.cx, p.cy - q.cy) > e + pit_extent(q) + 6.0;
            });
        }
        if (!placed) continue;
        render_pit(t.image, p);
        t.pits.push_back(p);
    }
    for (int y = 0; y < height; ++y)
        for (int x = 0; x < width; ++x) {
            const double f = 1.0 - shading * (static_cast<double>(x) / width + static_cast<double>(y) / height) / 2.0;
            t.image.at(x, y) = static_cast<float>(t.image.at(x, y) * f);
        }
    return t;
}

void write_wafer_fixture(const std::filesystem::path& dir, int cols, int rows, int tile_w, int tile_h,
                         int pits_per_tile, std::uint64_t seed, int overlap)
{
    std::filesystem::create_directories(dir / "tiles");
    std::mt19937_64 rng(seed);
    std::ofstream manifest(dir / "manifest.csv");
    std::ofstream truth(dir / "truth.csv");
    if (!manifest || !truth) throw DataError("cannot write fixture into " + dir.string());
    manifest << "tile_id,image_path,col,row,part,overlap_px,width,height,image_id\n";
    truth << "tile_id,type,cx,cy\n";
    coco::Dataset ds;
    int index = 0;
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c, ++index) {
            const std::string id = "t" + std::to_string(r) + "_" + std::to_string(c);
            const TileTruth t = wafer_tile(tile_w, tile_h, pits_per_tile, 0.25, rng);
            io::write_gray_png(dir / "tiles" / (id + ".png"), t.image);
            manifest << id << ",tiles/" << id << ".png," << c << ',' << r << ',' << (index % 20 + 1) << ','
                     << overlap << ',' << tile_w << ',' << tile_h << ',' << index + 1 << '\n';
            ds.images.push_back({index + 1, "tiles/" + id + ".png", tile_w, tile_h});
            for (const auto& p : t.pits) {
                truth << id << ',' << to_string(p.type) << ',' << p.cx << ',' << p.cy << '\n';
                // Box-only record: the counts are what the fixture truth is for.
                const double e = pit_extent(p);
                const double x0 = std::max(0.0, p.cx - e), y0 = std::max(0.0, p.cy - e);
                const double x1 = std::min<double>(tile_w, p.cx + e), y1 = std::min<double>(tile_h, p.cy + e);
                coco::Annotation a;
                a.id = static_cast<int>(ds.annotations.size()) + 1;
                a.image_id = index + 1;
                a.category_id = category_id(p.type);
                a.bbox = {x0, y0, x1 - x0, y1 - y0};
                a.area = std::numbers::pi * p.a * p.b;
                ds.annotations.push_back(std::move(a));
            }
        }
    }
    coco::write_dataset(dir / "truth.json", ds);
    io::write_gray_png(dir / "seed.png", background(48, 48, rng));
}

}  // namespace etchpit::pitgen
