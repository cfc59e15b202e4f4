#include "etchpit/synth.hpp"

#include "etchpit/error.hpp"
#include "etchpit/image_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

namespace etchpit::synth {

namespace {

struct Placed {
    Point origin;  // of the patch in the scene
    GrayImage image;
    BinaryMask mask;
};

// Distance-to-mask feathering weight in [0,1], patch coordinates grown by `f`.
GrayImage feather_alpha(const BinaryMask& mask, int f)
{
    GrayImage a(mask.width(), mask.height(), 0.0f);
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            if (mask.get(x, y)) {
                a.at(x, y) = 1.0f;
                continue;
            }
            double best = f + 1.0;
            for (int dy = -f; dy <= f; ++dy)
                for (int dx = -f; dx <= f; ++dx)
                    if (mask.get_or(x + dx, y + dy, false)) best = std::min(best, std::hypot(dx, dy));
            a.at(x, y) = static_cast<float>(std::max(0.0, 1.0 - best / (f + 1.0)));
        }
    return a;
}

bool overlaps(const BinaryMask& occupied, const BinaryMask& mask, Point origin, int margin)
{
    for (int y = 0; y < mask.height(); ++y)
        for (int x = 0; x < mask.width(); ++x) {
            if (!mask.get(x, y)) continue;
            for (int dy = -margin; dy <= margin; ++dy)
                for (int dx = -margin; dx <= margin; ++dx)
                    if (occupied.get_or(origin.x + x + dx, origin.y + y + dy, false)) return true;
        }
    return false;
}

void paste(GrayImage& img, const Placed& p, int feather)
{
    const GrayImage alpha = feather_alpha(p.mask, feather);
    for (int y = 0; y < p.image.height(); ++y)
        for (int x = 0; x < p.image.width(); ++x) {
            const int ix = p.origin.x + x, iy = p.origin.y + y;
            if (ix < 0 || iy < 0 || ix >= img.width() || iy >= img.height()) continue;
            const float a = alpha.at(x, y);
            if (a <= 0.0f) continue;
            const float bg = img.at(ix, iy);
            img.at(ix, iy) = bg - a * std::max(0.0f, bg - p.image.at(x, y));
        }
}

Instance make_instance(PitType type, const Placed& p, const std::string& id, int rotation)
{
    Instance in;
    in.type = type;
    in.source_id = id;
    in.rotation = rotation;
    Rect r{p.mask.width(), p.mask.height(), -1, -1};
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < p.mask.height(); ++y)
        for (int x = 0; x < p.mask.width(); ++x)
            if (p.mask.get(x, y)) {
                r.x0 = std::min(r.x0, x);
                r.y0 = std::min(r.y0, y);
                r.x1 = std::max(r.x1, x);
                r.y1 = std::max(r.y1, y);
                sx += x;
                sy += y;
                n += 1;
            }
    in.mask = crop(p.mask, r);
    in.bbox = {r.x0 + p.origin.x, r.y0 + p.origin.y, r.x1 + p.origin.x, r.y1 + p.origin.y};
    in.cx = p.origin.x + sx / n;
    in.cy = p.origin.y + sy / n;
    return in;
}

void mark(BinaryMask& occupied, const Placed& p)
{
    for (int y = 0; y < p.mask.height(); ++y)
        for (int x = 0; x < p.mask.width(); ++x)
            if (p.mask.get(x, y)) {
                const int ix = p.origin.x + x, iy = p.origin.y + y;
                if (ix >= 0 && iy >= 0 && ix < occupied.width() && iy < occupied.height()) occupied.set(ix, iy, true);
            }
}

std::pair<double, double> centroid(const BinaryMask& m)
{
    double sx = 0, sy = 0, n = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) {
                sx += x;
                sy += y;
                n += 1;
            }
    return n > 0 ? std::pair{sx / n, sy / n} : std::pair{m.width() / 2.0, m.height() / 2.0};
}

}  // namespace

SceneSpec SceneSpec::low_density()
{
    SceneSpec s;
    s.counts[index_of(PitType::BPD)] = {0, 20};
    s.counts[index_of(PitType::TED)] = {0, 10};
    s.counts[index_of(PitType::TSD)] = {0, 5};
    return s;
}

SceneSpec SceneSpec::high_density()
{
    SceneSpec s;
    s.counts[index_of(PitType::BPD)] = {0, 200};
    s.counts[index_of(PitType::TED)] = {0, 50};
    s.counts[index_of(PitType::TSD)] = {0, 20};
    return s;
}

std::array<int, 3> SyntheticScene::counts() const
{
    std::array<int, 3> c{};
    for (const auto& i : instances) ++c[index_of(i.type)];
    return c;
}

std::uint64_t scene_seed(std::uint64_t master, std::size_t index)
{
    std::seed_seq seq{static_cast<std::uint32_t>(master), static_cast<std::uint32_t>(master >> 32),
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32)};
    std::array<std::uint32_t, 2> out{};
    seq.generate(out.begin(), out.end());
    return (static_cast<std::uint64_t>(out[0]) << 32) | out[1];
}

SyntheticScene compose_scene(const SceneSpec& spec, const dictionary::Dictionary& dict, const BackgroundPool& pool,
                             std::uint64_t seed)
{
    for (const auto& r : spec.counts)
        if (r.lo < 0 || r.lo > r.hi) throw ConfigError("count ranges need 0 <= lo <= hi");
    if (pool.images.empty()) throw ConfigError("background pool is empty");
    std::mt19937_64 rng(seed);
    SyntheticScene scene;
    scene.seed = seed;

    const std::size_t bi = std::uniform_int_distribution<std::size_t>(0, pool.images.size() - 1)(rng);
    const GrayImage& bg = pool.images[bi];
    if (bg.width() < spec.width || bg.height() < spec.height)
        throw ConfigError("background " + pool.ids[bi] + " is smaller than the scene");
    const int cx0 = std::uniform_int_distribution<int>(0, bg.width() - spec.width)(rng);
    const int cy0 = std::uniform_int_distribution<int>(0, bg.height() - spec.height)(rng);
    scene.image = crop(bg, {cx0, cy0, cx0 + spec.width - 1, cy0 + spec.height - 1});
    scene.background_id = pool.ids[bi];

    std::array<int, 3> want{};
    for (PitType t : kPitTypes) {
        const auto& r = spec.counts[index_of(t)];
        want[index_of(t)] = std::uniform_int_distribution<int>(r.lo, r.hi)(rng);
        if (want[index_of(t)] > 0 && dict.of_type(t).empty())
            throw ConfigError("dictionary has no " + to_string(t) + " patches but the scene needs some");
    }
    if (spec.placement == Placement::LagbLine) want[index_of(PitType::BPD)] = spec.lagb.count;

    BinaryMask occupied(spec.width, spec.height);
    const int margin = spec.feather + 1;

    auto draw = [&](PitType t, int& rotation) {
        const auto pool_t = dict.of_type(t);
        const auto* e = pool_t[std::uniform_int_distribution<std::size_t>(0, pool_t.size() - 1)(rng)];
        // Round pits may be turned; BPD orientation carries the off-axis direction.
        rotation = t == PitType::BPD ? 0 : std::uniform_int_distribution<int>(0, 3)(rng);
        Placed p;
        p.image = rotate90(e->image, rotation);
        p.mask = rotate90(e->mask, rotation);
        return std::pair{e, p};
    };
    auto fits = [&](const Placed& p) {
        if (p.origin.x < 0 || p.origin.y < 0 || p.origin.x + p.image.width() > spec.width ||
            p.origin.y + p.image.height() > spec.height)
            return false;
        return spec.allow_overlap || !overlaps(occupied, p.mask, p.origin, margin);
    };
    auto commit = [&](PitType t, const dictionary::Entry* e, const Placed& p, int rotation) {
        paste(scene.image, p, spec.feather);
        mark(occupied, p);
        scene.instances.push_back(make_instance(t, p, e->id, rotation));
    };

    std::array<int, 3> dropped{};
    if (spec.placement == Placement::LagbLine && want[index_of(PitType::BPD)] > 0) {
        const int n = want[index_of(PitType::BPD)];
        bool done = false;
        for (int attempt = 0; attempt < spec.max_retries && !done; ++attempt) {
            std::vector<std::pair<const dictionary::Entry*, Placed>> items;
            int side = 0;
            for (int k = 0; k < n; ++k) {
                int rot = 0;
                items.push_back(draw(PitType::BPD, rot));
                side = std::max({side, items.back().second.image.width(), items.back().second.image.height()});
            }
            double spacing = spec.lagb.spacing > 0 ? spec.lagb.spacing : 1.3 * side;
            const double max_len = std::hypot(spec.width - side, spec.height - side) * 0.9;
            if (n > 1 && (n - 1) * spacing > max_len) spacing = max_len / (n - 1);
            const double len = (n - 1) * spacing;
            const double phi = std::uniform_real_distribution<double>(0, std::numbers::pi)(rng);
            const double ux = std::cos(phi), uy = std::sin(phi);
            const double hx = std::abs(ux) * len / 2 + side / 2.0, hy = std::abs(uy) * len / 2 + side / 2.0;
            if (2 * hx >= spec.width || 2 * hy >= spec.height) continue;
            const double mx = std::uniform_real_distribution<double>(hx, spec.width - hx)(rng);
            const double my = std::uniform_real_distribution<double>(hy, spec.height - hy)(rng);
            std::vector<Placed> placed;
            bool ok = true;
            BinaryMask trial = occupied;
            for (int k = 0; k < n && ok; ++k) {
                const double jitter = spec.lagb.jitter * spacing * std::uniform_real_distribution<double>(-1, 1)(rng);
                const double t = -len / 2 + k * spacing + jitter;
                Placed p = items[k].second;
                const auto [lx, ly] = centroid(p.mask);
                p.origin = {static_cast<int>(std::lround(mx + t * ux - lx)), static_cast<int>(std::lround(my + t * uy - ly))};
                if (p.origin.x < 0 || p.origin.y < 0 || p.origin.x + p.image.width() > spec.width ||
                    p.origin.y + p.image.height() > spec.height)
                    ok = false;
                else if (!spec.allow_overlap && overlaps(trial, p.mask, p.origin, margin))
                    ok = false;
                else {
                    BinaryMask& tm = trial;
                    for (int y = 0; y < p.mask.height(); ++y)
                        for (int x = 0; x < p.mask.width(); ++x)
                            if (p.mask.get(x, y)) tm.set(p.origin.x + x, p.origin.y + y, true);
                    placed.push_back(std::move(p));
                }
            }
            if (!ok) continue;
            for (int k = 0; k < n; ++k) commit(PitType::BPD, items[k].first, placed[k], 0);
            done = true;
        }
        if (!done) {
            dropped[index_of(PitType::BPD)] = n;
            scene.warnings.push_back("could not place the LAGB line; " + std::to_string(n) + " BPDs dropped");
        }
    }

    for (PitType t : kPitTypes) {
        if (spec.placement == Placement::LagbLine && t == PitType::BPD) continue;
        for (int k = 0; k < want[index_of(t)]; ++k) {
            int rot = 0;
            auto [e, p] = draw(t, rot);
            bool placed = false;
            for (int attempt = 0; attempt < spec.max_retries && !placed; ++attempt) {
                p.origin = {std::uniform_int_distribution<int>(0, std::max(0, spec.width - p.image.width()))(rng),
                            std::uniform_int_distribution<int>(0, std::max(0, spec.height - p.image.height()))(rng)};
                placed = fits(p);
            }
            if (placed) commit(t, e, p, rot);
            else ++dropped[index_of(t)];
        }
    }
    for (PitType t : kPitTypes)
        if (dropped[index_of(t)] > 0 && spec.placement == Placement::Random)
            scene.warnings.push_back("no room for " + std::to_string(dropped[index_of(t)]) + " " + to_string(t) +
                                     " after " + std::to_string(spec.max_retries) + " retries; count reduced");
    return scene;
}

std::vector<SyntheticScene> compose_scenes(const SceneSpec& spec, const dictionary::Dictionary& dict,
                                           const BackgroundPool& pool, std::uint64_t master, int n)
{
    std::vector<SyntheticScene> scenes(static_cast<std::size_t>(std::max(0, n)));
    std::vector<std::string> errors(scenes.size());
#pragma omp parallel for schedule(dynamic)
    for (int i = 0; i < n; ++i) {
        try {
            scenes[i] = compose_scene(spec, dict, pool, scene_seed(master, static_cast<std::size_t>(i)));
        } catch (const std::exception& e) {
            errors[i] = e.what();
        }
    }
    for (const auto& e : errors)
        if (!e.empty()) throw ConfigError(e);
    return scenes;
}

coco::Dataset to_coco(const std::vector<SyntheticScene>& scenes)
{
    coco::Dataset d;
    int ann = 1;
    char name[64];
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        std::snprintf(name, sizeof name, "scene_%05zu.png", i);
        const int image_id = static_cast<int>(i) + 1;
        d.images.push_back({image_id, std::string("images/") + name, s.image.width(), s.image.height()});
        for (const auto& in : s.instances) {
            coco::Annotation a;
            a.id = ann++;
            a.image_id = image_id;
            a.category_id = category_id(in.type);
            a.bbox = {static_cast<double>(in.bbox.x0), static_cast<double>(in.bbox.y0),
                      static_cast<double>(in.bbox.width()), static_cast<double>(in.bbox.height())};
            a.area = static_cast<double>(in.mask.count());
            a.segmentation = coco::encode(in.mask, {in.bbox.x0, in.bbox.y0}, s.image.width(), s.image.height());
            d.annotations.push_back(std::move(a));
        }
    }
    return d;
}

coco::Dataset export_dataset(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& dir,
                             std::uint64_t master_seed)
{
    if (scenes.empty()) throw PreconditionError("no scenes to export");
    const coco::Dataset d = to_coco(scenes);
    nlohmann::json manifest;
    manifest["master_seed"] = master_seed;
    manifest["scenes"] = nlohmann::json::array();
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        const auto& s = scenes[i];
        io::write_gray_png(dir / d.images[i].file_name, s.image);
        const auto c = s.counts();
        manifest["scenes"].push_back({{"file", d.images[i].file_name},
                                      {"image_id", d.images[i].id},
                                      {"seed", s.seed},
                                      {"background", s.background_id},
                                      {"counts", {{"BPD", c[0]}, {"TED", c[1]}, {"TSD", c[2]}}},
                                      {"warnings", s.warnings}});
    }
    coco::write_dataset(dir / "annotations.json", d);
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << manifest.dump(1) << '\n';
    return d;
}

}  // namespace etchpit::synth
