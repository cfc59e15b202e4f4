#include "fixtures.hpp"

#include "etchpit/embed.hpp"
#include "etchpit/features.hpp"
#include "etchpit/pitgen.hpp"

#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <random>
#include <stdexcept>

#include <unistd.h>

namespace etchpit::testing {

BinaryMask raster_ellipse(double a, double b, double angle, int pad, double cx_frac, double cy_frac)
{
    const int half = static_cast<int>(std::ceil(std::max(a, b))) + pad;
    const int side = 2 * half + 1;
    BinaryMask m(side, side);
    const double cx = half + cx_frac, cy = half + cy_frac;
    const double c = std::cos(angle), s = std::sin(angle);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double dx = x - cx, dy = y - cy;
            const double u = c * dx + s * dy, v = -s * dx + c * dy;
            if ((u * u) / (a * a) + (v * v) / (b * b) <= 1.0) m.set(x, y, true);
        }
    return m;
}

BinaryMask plus_shape(int thick, int len, int pad)
{
    const int side = len + 2 * pad;
    BinaryMask m(side, side);
    const int c = side / 2, h = thick / 2, l = len / 2;
    for (int y = c - l; y <= c + l; ++y)
        for (int x = c - h; x <= c + h; ++x) {
            m.set(x, y, true);
            m.set(y, x, true);
        }
    return m;
}

imgproc::Blob blob_of(const BinaryMask& m)
{
    std::vector<Point> px;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) px.push_back({x, y});
    return imgproc::make_blob(std::move(px));
}

GrayImage paint(const BinaryMask& m, float fg, float bg)
{
    GrayImage img(m.width(), m.height(), bg);
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) img.at(x, y) = fg;
    return img;
}

Planted gaussian_clusters(int k, int per_cluster, int dim, double separation, std::uint64_t seed, double sigma)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g;
    // Centres on scaled unit axes keep pairwise gaps at separation.
    Planted p;
    p.x = Matrix(static_cast<std::size_t>(k * per_cluster), static_cast<std::size_t>(dim));
    for (int c = 0; c < k; ++c)
        for (int i = 0; i < per_cluster; ++i) {
            const auto r = static_cast<std::size_t>(c * per_cluster + i);
            for (int j = 0; j < dim; ++j) p.x(r, j) = sigma * g(rng);
            p.x(r, static_cast<std::size_t>(c % dim)) += separation / std::sqrt(2.0);
            p.labels.push_back(c);
        }
    return p;
}

TempDir::TempDir(const std::string& tag)
{
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("etchpit-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
}

TempDir::~TempDir()
{
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
}

imgproc::Patch largest_blob_patch(const GrayImage& img, double threshold, int border)
{
    const auto blobs = imgproc::segment_candidates(img, threshold, {});
    if (blobs.empty()) throw std::runtime_error("no blob in sample");
    std::size_t best = 0;
    for (std::size_t i = 1; i < blobs.size(); ++i)
        if (blobs[i].area() > blobs[best].area()) best = i;
    return imgproc::extract_patch(img, blobs[best], border);
}

dictionary::Dictionary tile_dictionary(int n_tiles, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    dictionary::Dictionary d;
    std::vector<std::vector<double>> rows;
    for (int t = 0; t < n_tiles; ++t) {
        const auto tile = pitgen::wafer_tile(320, 240, 14, 0.25, rng);
        const GrayImage corrected = imgproc::correct_contrast(tile.image);
        for (const auto& b : imgproc::segment_candidates(corrected, 0.45, {})) {
            const auto fit = imgproc::fit_ellipse(b);
            if (!imgproc::shape_gate(b, fit).keep) continue;
            // Construction type of the pit under the blob; stray blobs are skipped.
            const pitgen::PitShape* near = nullptr;
            for (const auto& pit : tile.pits)
                if (std::hypot(pit.cx - b.cx, pit.cy - b.cy) < 4) near = &pit;
            if (!near) continue;
            imgproc::Patch p = imgproc::extract_patch(corrected, b, 10);
            p.image = quantize_u8(p.image);
            const auto f = features::classical_features(p);
            std::vector<double> row;
            for (double v : f.values) row.push_back(static_cast<double>(static_cast<float>(v)));
            rows.push_back(std::move(row));

            dictionary::Entry e;
            e.id = "t" + std::to_string(t) + "_" + std::to_string(d.entries.size());
            e.type = near->type;
            e.source = "tile_" + std::to_string(t);
            e.origin = p.origin();
            e.image = p.image;
            e.mask = p.mask;
            e.descriptors = imgproc::describe(b, fit);
            e.area = static_cast<double>(b.area());
            d.entries.push_back(std::move(e));
            d.reference.ids.push_back(d.entries.back().id);
        }
    }
    d.reference.values = Matrix(rows.size(), features::kClassicalDim);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) d.reference.values(i, j) = rows[i][j];
    d.normalizer = features::MinMaxNormalizer::fit(d.reference.values);
    d.coords = embed::scale_components(embed::reduce(d.normalizer.apply(d.reference.values), d.embed_config)).coords;
    d.compute_centroids();
    return d;
}

std::uint64_t hash_file(const std::filesystem::path& p)
{
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read " + p.string());
    std::uint64_t h = 1469598103934665603ull;
    for (std::istreambuf_iterator<char> it(in), end; it != end; ++it) {
        h ^= static_cast<unsigned char>(*it);
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace etchpit::testing
