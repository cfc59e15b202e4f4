#include "etchpit/coco.hpp"
#include "etchpit/error.hpp"
#include "etchpit/pitgen.hpp"
#include "etchpit/synth.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

using namespace etchpit;
using namespace etchpit::synth;

namespace {

dictionary::Entry entry(PitType t, const BinaryMask& m, const std::string& id)
{
    dictionary::Entry e;
    e.id = id;
    e.type = t;
    e.image = testing::paint(m);
    e.mask = m;
    e.area = static_cast<double>(m.count());
    return e;
}

// Small hand-drawn pits, two per type.
dictionary::Dictionary toy_dictionary()
{
    dictionary::Dictionary d;
    d.entries.push_back(entry(PitType::BPD, testing::raster_ellipse(9, 4, 0.0, 2), "bpd_0"));
    d.entries.push_back(entry(PitType::BPD, testing::raster_ellipse(10, 4.5, 0.1, 2), "bpd_1"));
    d.entries.push_back(entry(PitType::TED, testing::raster_disk(4, 2), "ted_0"));
    d.entries.push_back(entry(PitType::TED, testing::raster_disk(5, 2), "ted_1"));
    d.entries.push_back(entry(PitType::TSD, testing::raster_disk(9, 2), "tsd_0"));
    d.entries.push_back(entry(PitType::TSD, testing::raster_disk(11, 2), "tsd_1"));
    return d;
}

BackgroundPool one_background(int w, int h, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    BackgroundPool pool;
    pool.images.push_back(quantize_u8(pitgen::background(w, h, rng)));
    pool.ids.push_back("bg0");
    return pool;
}

SceneSpec only(PitType t, int lo, int hi, int size = 256)
{
    SceneSpec s;
    s.width = s.height = size;
    s.counts[index_of(t)] = {lo, hi};
    return s;
}

std::map<float, double> histogram(const GrayImage& img)
{
    std::map<float, double> h;
    for (float v : img.data()) h[v] += 1.0 / static_cast<double>(img.size());
    return h;
}

double chi_square_distance(const std::map<float, double>& a, const std::map<float, double>& b)
{
    std::map<float, std::pair<double, double>> both;
    for (const auto& [k, v] : a) both[k].first = v;
    for (const auto& [k, v] : b) both[k].second = v;
    double s = 0;
    for (const auto& [k, p] : both) s += 0.5 * (p.first - p.second) * (p.first - p.second) / (p.first + p.second);
    return s;
}

}  // namespace

TEST_CASE("constant seed grows a constant texture")
{
    const GrayImage seed(16, 16, 0.4f);
    TextureParams p;
    p.window = 5;
    const GrayImage out = grow_texture(seed, 40, 30, p);
    CHECK(out.width() == 40);
    CHECK(out.height() == 30);
    for (float v : out.data()) CHECK(v == 0.4f);
}

TEST_CASE("checkerboard seed continues exactly")
{
    GrayImage seed(16, 16);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) seed.at(x, y) = (x + y) % 2 ? 0.8f : 0.2f;
    for (std::uint64_t s : {1u, 2u, 3u}) {
        TextureParams p;
        p.window = 5;
        p.seed = s;
        const GrayImage out = grow_texture(seed, 48, 40, p);
        // The seed sits at the centre; its parity fixes the whole board.
        const int ox = (48 - 16) / 2, oy = (40 - 16) / 2;
        REQUIRE(out.at(ox, oy) == seed.at(0, 0));
        const int flip = (ox + oy) % 2;
        int wrong = 0;
        for (int y = 2; y < 38; ++y)
            for (int x = 2; x < 46; ++x) wrong += out.at(x, y) != ((x + y + flip) % 2 ? 0.8f : 0.2f);
        CHECK(wrong == 0);
    }
}

TEST_CASE("grown texture only uses seed values and keeps its histogram")
{
    std::mt19937_64 rng(1);
    const GrayImage seed = quantize_u8(pitgen::background(48, 48, rng));
    const auto hs = histogram(seed);
    for (std::uint64_t s : {100u, 101u, 102u}) {
        TextureParams p;
        p.window = 7;
        p.seed = s;
        const GrayImage out = grow_texture(seed, 96, 96, p);
        const auto ho = histogram(out);
        for (const auto& [v, f] : ho) CHECK(hs.count(v) == 1);
        // Frozen from ten reference runs (seeds 0-9), whose worst distance was 0.0017.
        CHECK(chi_square_distance(hs, ho) <= 0.003);
        CHECK(grow_texture(seed, 96, 96, p) == out);
    }
}

TEST_CASE("texture preconditions")
{
    const GrayImage seed(10, 10, 0.5f);
    TextureParams p;
    p.window = 4;
    CHECK_THROWS_AS(grow_texture(seed, 20, 20, p), PreconditionError);
    p.window = 11;
    CHECK_THROWS_AS(grow_texture(seed, 20, 20, p), PreconditionError);
    p.window = 5;
    CHECK_THROWS_AS(grow_texture(seed, 8, 20, p), PreconditionError);
}

TEST_CASE("forced counts without overlap")
{
    const auto dict = toy_dictionary();
    const auto pool = one_background(256, 256, 2);
    SceneSpec spec = only(PitType::BPD, 3, 3);
    spec.allow_overlap = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scene = compose_scene(spec, dict, pool, seed);
        REQUIRE(scene.instances.size() == 3);
        BinaryMask seen(256, 256);
        for (const auto& in : scene.instances) {
            CHECK(in.type == PitType::BPD);
            CHECK(in.rotation == 0);
            for (int y = 0; y < in.mask.height(); ++y)
                for (int x = 0; x < in.mask.width(); ++x) {
                    if (!in.mask.get(x, y)) continue;
                    const int ix = in.bbox.x0 + x, iy = in.bbox.y0 + y;
                    REQUIRE(ix < 256);
                    REQUIRE(iy < 256);
                    CHECK_FALSE(seen.get(ix, iy));
                    seen.set(ix, iy, true);
                }
        }
    }
}

TEST_CASE("low-density counts are uniform over their ranges")
{
    const auto dict = toy_dictionary();
    const auto pool = one_background(256, 256, 3);
    SceneSpec spec = SceneSpec::low_density();
    spec.width = spec.height = 256;
    const auto scenes = compose_scenes(spec, dict, pool, 77, 1000);
    // Upper 1% points of chi-square with 20, 10 and 5 degrees of freedom.
    const std::array<double, 3> critical = {37.566, 23.209, 15.086};
    for (PitType t : kPitTypes) {
        const auto r = spec.counts[index_of(t)];
        std::vector<double> hist(static_cast<std::size_t>(r.hi + 1), 0.0);
        for (const auto& s : scenes) {
            const int c = s.counts()[index_of(t)];
            REQUIRE(c >= r.lo);
            REQUIRE(c <= r.hi);
            hist[static_cast<std::size_t>(c)] += 1;
        }
        const double expected = 1000.0 / static_cast<double>(hist.size());
        double chi = 0;
        for (double h : hist) chi += (h - expected) * (h - expected) / expected;
        INFO(to_string(t), " chi-square ", chi);
        CHECK(chi < critical[index_of(t)]);
    }
}

TEST_CASE("LAGB line places BPDs on a straight segment")
{
    const auto dict = toy_dictionary();
    const auto pool = one_background(512, 512, 4);
    SceneSpec spec = only(PitType::BPD, 0, 0, 512);
    spec.placement = Placement::LagbLine;
    spec.lagb.count = 8;
    spec.allow_overlap = false;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        const auto scene = compose_scene(spec, dict, pool, seed);
        REQUIRE(scene.instances.size() == 8);
        // Total least squares line through the centres.
        double mx = 0, my = 0;
        for (const auto& in : scene.instances) {
            mx += in.cx / 8;
            my += in.cy / 8;
        }
        double sxx = 0, syy = 0, sxy = 0;
        for (const auto& in : scene.instances) {
            sxx += (in.cx - mx) * (in.cx - mx);
            syy += (in.cy - my) * (in.cy - my);
            sxy += (in.cx - mx) * (in.cy - my);
        }
        const double tr = sxx + syy, det = sxx * syy - sxy * sxy;
        const double lmin = tr / 2 - std::sqrt(std::max(0.0, tr * tr / 4 - det));
        CHECK(std::sqrt(lmin / 8) <= 3.0);
    }
}

TEST_CASE("pasting only darkens and masks are at pit level")
{
    const auto dict = toy_dictionary();
    const auto pool = one_background(200, 200, 5);
    SceneSpec spec;
    spec.width = spec.height = 200;
    spec.counts = {CountRange{5, 10}, CountRange{5, 10}, CountRange{2, 4}};
    const auto scene = compose_scene(spec, dict, pool, 9);
    const GrayImage& bg = pool.images[0];
    for (std::size_t i = 0; i < bg.size(); ++i) CHECK(scene.image.data()[i] <= bg.data()[i]);
    for (const auto& in : scene.instances)
        for (int y = 0; y < in.mask.height(); ++y)
            for (int x = 0; x < in.mask.width(); ++x)
                if (in.mask.get(x, y)) CHECK(scene.image.at(in.bbox.x0 + x, in.bbox.y0 + y) <= 0.1f + 1e-6f);
}

TEST_CASE("scenes are reproducible from their seed")
{
    const auto dict = toy_dictionary();
    const auto pool = one_background(300, 300, 6);
    SceneSpec spec = SceneSpec::low_density();
    spec.width = spec.height = 256;
    const auto a = compose_scenes(spec, dict, pool, 5, 6);
    const auto b = compose_scenes(spec, dict, pool, 5, 6);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].image == b[i].image);
        CHECK(a[i].seed == scene_seed(5, i));
        REQUIRE(a[i].instances.size() == b[i].instances.size());
        for (std::size_t k = 0; k < a[i].instances.size(); ++k) CHECK(a[i].instances[k].mask == b[i].instances[k].mask);
    }
    CHECK(scene_seed(5, 0) != scene_seed(5, 1));
    CHECK(scene_seed(5, 0) != scene_seed(6, 0));
}

TEST_CASE("missing dictionary types and bad ranges are configuration errors")
{
    auto dict = toy_dictionary();
    dict.entries.resize(2);  // BPD only
    const auto pool = one_background(128, 128, 7);
    CHECK_THROWS_AS(compose_scene(only(PitType::TSD, 1, 2, 128), dict, pool, 1), ConfigError);
    CHECK_NOTHROW(compose_scene(only(PitType::BPD, 1, 2, 128), dict, pool, 1));
    CHECK_THROWS_AS(compose_scene(only(PitType::BPD, 3, 2, 128), dict, pool, 1), ConfigError);
    CHECK_THROWS_AS(compose_scene(only(PitType::BPD, 1, 2, 256), dict, pool, 1), ConfigError);
}

TEST_CASE("export writes images, annotations and a manifest")
{
    testing::TempDir dir("synth");
    const auto dict = toy_dictionary();
    const auto pool = one_background(128, 128, 8);
    SceneSpec full;
    full.width = full.height = 128;
    full.counts = {CountRange{1, 1}, CountRange{1, 1}, CountRange{1, 1}};
    full.allow_overlap = false;
    SceneSpec empty = full;
    empty.counts = {};
    const std::vector<SyntheticScene> scenes = {compose_scene(full, dict, pool, 1), compose_scene(empty, dict, pool, 2)};
    export_dataset(scenes, dir.path(), 42);

    const auto d = coco::read_dataset(dir / "annotations.json");
    REQUIRE(d.images.size() == 2);
    REQUIRE(d.annotations.size() == 3);
    std::set<int> cats;
    for (const auto& a : d.annotations) {
        CHECK(a.image_id == d.images[0].id);
        cats.insert(a.category_id);
    }
    CHECK(cats == std::set<int>{1, 2, 3});
    for (const auto& im : d.images) CHECK(std::filesystem::exists(dir / im.file_name));
    CHECK(std::filesystem::exists(dir / "manifest.json"));
    // The empty scene is listed even though it has no annotations.
    CHECK(d.images[1].width == 128);
    CHECK_THROWS_AS(export_dataset({}, dir.path(), 1), PreconditionError);
}
