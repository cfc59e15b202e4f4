#include "etchpit/analyze.hpp"

#include "etchpit/error.hpp"
#include "etchpit/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <unordered_map>

namespace etchpit::analyze {

namespace {

struct WaferRect {
    double x0, y0, x1, y1;  // half-open, wafer pixels
};

WaferRect rect_of(const TileRecord& t)
{
    const Point o = t.origin();
    return {static_cast<double>(o.x), static_cast<double>(o.y), static_cast<double>(o.x + t.width),
            static_cast<double>(o.y + t.height)};
}

// Piecewise-linear approximation of a perceptual blue-green-yellow map.
std::array<std::uint8_t, 3> colormap(double t)
{
    static constexpr std::array<std::array<double, 3>, 5> anchors = {
        {{68, 1, 84}, {59, 82, 139}, {33, 145, 140}, {94, 201, 98}, {253, 231, 37}}};
    t = std::clamp(t, 0.0, 1.0) * (anchors.size() - 1);
    const auto i = std::min<std::size_t>(static_cast<std::size_t>(t), anchors.size() - 2);
    const double f = t - static_cast<double>(i);
    std::array<std::uint8_t, 3> c{};
    for (int k = 0; k < 3; ++k)
        c[k] = static_cast<std::uint8_t>(std::lround(anchors[i][k] * (1 - f) + anchors[i + 1][k] * f));
    return c;
}

}  // namespace

DedupResult dedup_overlaps(const std::vector<Detection>& list, const TileManifest& m, double radius_px)
{
    struct Item {
        double own;  // distance to own tile centre
        std::string tile;
        std::size_t index;
    };
    std::vector<Item> items;
    items.reserve(list.size());
    for (std::size_t i = 0; i < list.size(); ++i) {
        const TileRecord* t = m.find_tile(list[i].tile_id);
        double own = 0.0;
        if (t) {
            const Point o = t->origin();
            own = std::hypot(list[i].wafer_x - (o.x + t->width / 2.0), list[i].wafer_y - (o.y + t->height / 2.0));
        }
        items.push_back({own, list[i].tile_id, i});
    }
    std::sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
        return std::tie(a.own, a.tile, a.index) < std::tie(b.own, b.tile, b.index);
    });

    const double cell = std::max(radius_px, 1.0);
    auto key = [&](double x, double y) {
        const auto cx = static_cast<long long>(std::floor(x / cell)), cy = static_cast<long long>(std::floor(y / cell));
        return (cx << 32) ^ (cy & 0xffffffffLL);
    };
    std::unordered_map<long long, std::vector<std::size_t>> grid;
    std::vector<char> keep(list.size(), 0);
    DedupResult r;
    for (const Item& it : items) {
        const Detection& d = list[it.index];
        bool dup = false;
        for (int dy = -1; dy <= 1 && !dup; ++dy)
            for (int dx = -1; dx <= 1 && !dup; ++dx) {
                auto g = grid.find(key(d.wafer_x + dx * cell, d.wafer_y + dy * cell));
                if (g == grid.end()) continue;
                for (std::size_t j : g->second) {
                    const Detection& o = list[j];
                    if (o.type == d.type && o.tile_id != d.tile_id &&
                        std::hypot(o.wafer_x - d.wafer_x, o.wafer_y - d.wafer_y) <= radius_px) {
                        dup = true;
                        break;
                    }
                }
            }
        if (dup) {
            ++r.removed;
            continue;
        }
        keep[it.index] = 1;
        grid[key(d.wafer_x, d.wafer_y)].push_back(it.index);
    }
    for (std::size_t i = 0; i < list.size(); ++i)
        if (keep[i]) r.kept.push_back(list[i]);
    return r;
}

double density_per_cm2(long long count, double bin_um)
{
    // 1 cm^2 = 1e8 um^2; multiply first so round bins stay exact.
    return static_cast<double>(count) * 1e8 / (bin_um * bin_um);
}

double DensityMap::density(int ix, int iy) const { return density_per_cm2(at(ix, iy), bin_um); }

long long DensityMap::total() const { return std::accumulate(counts.begin(), counts.end(), 0LL); }

DensityResult density_map(const std::vector<Detection>& list, const TileManifest& m, double bin_um,
                          double dedup_radius_px)
{
    if (!(bin_um > 0)) throw ConfigError("density bin size must be positive");
    if (!(m.pixel_size_um > 0)) throw ConfigError("pixel size must be positive");
    if (m.tiles.empty()) throw DataError("density map needs a non-empty tile manifest");
    DensityResult r;
    double ext_x = 0, ext_y = 0;
    std::vector<WaferRect> rects;
    for (const auto& t : m.tiles) {
        rects.push_back(rect_of(t));
        ext_x = std::max(ext_x, rects.back().x1);
        ext_y = std::max(ext_y, rects.back().y1);
    }
    const int nx = std::max(1, static_cast<int>(std::ceil(ext_x * m.pixel_size_um / bin_um)));
    const int ny = std::max(1, static_cast<int>(std::ceil(ext_y * m.pixel_size_um / bin_um)));
    for (PitType t : kPitTypes) {
        auto& map = r.maps[index_of(t)];
        map.type = t;
        map.bin_um = bin_um;
        map.nx = nx;
        map.ny = ny;
        map.counts.assign(static_cast<std::size_t>(nx) * ny, 0);
    }

    std::vector<Detection> inside;
    for (const auto& d : list) {
        const bool in = std::any_of(rects.begin(), rects.end(), [&](const WaferRect& w) {
            return d.wafer_x >= w.x0 && d.wafer_x < w.x1 && d.wafer_y >= w.y0 && d.wafer_y < w.y1;
        });
        (in ? inside : r.out_of_bounds).push_back(d);
    }
    DedupResult dd = dedup_overlaps(inside, m, dedup_radius_px);
    r.duplicates_removed = dd.removed;
    r.kept = std::move(dd.kept);
    for (const auto& d : r.kept) {
        const int ix = std::clamp(static_cast<int>(std::floor(d.wafer_x * m.pixel_size_um / bin_um)), 0, nx - 1);
        const int iy = std::clamp(static_cast<int>(std::floor(d.wafer_y * m.pixel_size_um / bin_um)), 0, ny - 1);
        ++r.maps[index_of(d.type)].counts[static_cast<std::size_t>(iy) * nx + ix];
    }
    return r;
}

std::optional<PitType> PartCounts::dominant(int part) const
{
    const auto& row = counts.at(static_cast<std::size_t>(part - 1));
    std::optional<PitType> best;
    long long most = 0;
    for (PitType t : kPitTypes)
        if (row[index_of(t)] > most) {
            most = row[index_of(t)];
            best = t;
        }
    return best;
}

long long PartCounts::total(int part) const
{
    const auto& row = counts.at(static_cast<std::size_t>(part - 1));
    return row[0] + row[1] + row[2];
}

PartCounts part_counts(const std::vector<Detection>& list, const TileManifest& m)
{
    PartCounts p;
    for (const auto& d : list) {
        const TileRecord* t = m.find_tile(d.tile_id);
        if (!t) throw DataError("detection refers to unknown tile " + d.tile_id);
        ++p.counts[static_cast<std::size_t>(t->part - 1)][index_of(d.type)];
    }
    return p;
}

BurgersRadius burgers_radius(double area_px, double pixel_size_um, const SizeClasses& classes)
{
    if (!(area_px > 0)) throw DataError("etch pit mask has zero area");
    if (!(pixel_size_um > 0)) throw ConfigError("pixel size must be positive");
    if (classes.names.size() != classes.upper_um.size() + 1)
        throw ConfigError("size classes need one more name than thresholds");
    BurgersRadius b;
    b.radius_px = std::sqrt(area_px / std::numbers::pi);
    b.radius_um = b.radius_px * pixel_size_um;
    std::size_t k = 0;
    while (k < classes.upper_um.size() && b.radius_um >= classes.upper_um[k]) ++k;
    b.size_class = classes.names[k];
    return b;
}

void write_density_csv(const std::filesystem::path& path, const DensityMap& m)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "# type=" << to_string(m.type) << " bin_um=" << m.bin_um << " unit=cm^-2\n";
    for (int y = 0; y < m.ny; ++y) {
        for (int x = 0; x < m.nx; ++x) out << (x ? "," : "") << m.density(x, y);
        out << '\n';
    }
}

void write_density_png(const std::filesystem::path& path, const DensityMap& m)
{
    const int scale = std::max(1, 256 / std::max(m.nx, m.ny));
    io::RgbImage img;
    img.width = m.nx * scale;
    img.height = m.ny * scale;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height);
    long long most = 0;
    for (long long c : m.counts) most = std::max(most, c);
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
            const long long c = m.at(x / scale, y / scale);
            img.pixels[static_cast<std::size_t>(y) * img.width + x] =
                colormap(most > 0 ? static_cast<double>(c) / static_cast<double>(most) : 0.0);
        }
    io::write_rgb_png(path, img);
}

void write_part_counts_csv(const std::filesystem::path& path, const PartCounts& p)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "part,BPD,TED,TSD,total,dominant\n";
    for (int part = 1; part <= 20; ++part) {
        const auto& row = p.counts[static_cast<std::size_t>(part - 1)];
        const auto dom = p.dominant(part);
        out << part << ',' << row[0] << ',' << row[1] << ',' << row[2] << ',' << p.total(part) << ','
            << (dom ? to_string(*dom) : "") << '\n';
    }
}

}  // namespace etchpit::analyze
