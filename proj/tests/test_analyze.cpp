#include "etchpit/analyze.hpp"
#include "etchpit/error.hpp"
#include "etchpit/pitgen.hpp"
#include "etchpit/synth.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <cmath>
#include <fstream>
#include <random>

using namespace etchpit;
using namespace etchpit::analyze;

namespace {

TileRecord tile(const std::string& id, int col, int row, int part, int w = 100, int h = 100, int overlap = 0)
{
    TileRecord t;
    t.tile_id = id;
    t.col = col;
    t.row = row;
    t.part = part;
    t.width = w;
    t.height = h;
    t.overlap_px = overlap;
    t.image_id = 1 + col + 100 * row;
    return t;
}

Detection at(PitType type, const TileRecord& t, double x, double y, double pixel_um)
{
    Detection d;
    d.type = type;
    d.x = x;
    d.y = y;
    d.area = 20;
    d.bbox = {static_cast<int>(x) - 2, static_cast<int>(y) - 2, static_cast<int>(x) + 2, static_cast<int>(y) + 2};
    locate(d, t, pixel_um);
    return d;
}

nlohmann::json record(int image, int category, double x, double y, double w = 4, double h = 4)
{
    return {{"image_id", image}, {"category_id", category}, {"bbox", {x, y, w, h}}, {"score", 0.9}};
}

}  // namespace

TEST_CASE("rmse examples")
{
    const std::vector<double> a = {4, 7, 9};
    CHECK(rmse(a, a) == 0.0);
    const std::vector<double> z = {0, 0}, p = {3, 4};
    CHECK(std::abs(rmse(z, p) - std::sqrt(12.5)) <= 1e-12);
    CHECK(std::abs(rmse(z, p) - 3.5355339059327378) <= 1e-12);
    const std::vector<double> t1 = {10}, p1 = {7};
    CHECK(rmse(t1, p1) == 3.0);
    CHECK_THROWS_AS(rmse(a, z), PreconditionError);
    CHECK_THROWS_AS(rmse(std::vector<double>{}, std::vector<double>{}), PreconditionError);
}

TEST_CASE("rmse properties on random vectors")
{
    std::mt19937_64 rng(8);
    std::uniform_int_distribution<int> count(0, 200), len(1, 50);
    std::uniform_real_distribution<double> shift(-20, 20);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<double> y(static_cast<std::size_t>(len(rng))), q(y.size());
        for (std::size_t i = 0; i < y.size(); ++i) {
            y[i] = count(rng);
            q[i] = count(rng);
        }
        const double e = rmse(y, q);
        CHECK(e >= 0.0);
        CHECK(e == rmse(q, y));
        CHECK(rmse(y, y) == 0.0);
        const double c = std::round(shift(rng));
        std::vector<double> s = y;
        for (double& v : s) v += c;
        CHECK(rmse(y, s) == std::abs(c));
    }
}

TEST_CASE("evaluation over a count table")
{
    CountTable truth = {{1, {3, 2, 1}}, {2, {0, 5, 0}}, {3, {7, 0, 2}}};
    CountTable pred = truth;
    for (auto& [id, c] : pred) c[0] += 1;
    pred[9] = {1, 1, 1};
    const auto r = evaluate(truth, pred, "fixture");
    CHECK(r.rmse[0] == 1.0);
    CHECK(r.rmse[1] == 0.0);
    CHECK(r.rmse[2] == 0.0);
    CHECK(r.excluded == std::vector<int>{9});
    REQUIRE(r.images.size() == 3);
    for (const auto& e : r.images) CHECK(e.error == std::array<double, 3>{1, 0, 0});
    CHECK(to_json(r)["rmse"]["BPD"] == 1.0);

    // An image without predictions counts as zero detections.
    const auto missing = evaluate(CountTable{{1, {2, 0, 0}}}, CountTable{}, "x");
    CHECK(missing.rmse[0] == 2.0);
    CHECK_THROWS_AS(evaluate(CountTable{}, pred, "x"), DataError);
}

TEST_CASE("ingesting external predictions")
{
    TileManifest m;
    m.tiles = {tile("a", 0, 0, 1), tile("b", 1, 0, 1)};
    const int ia = m.tiles[0].image_id, ib = m.tiles[1].image_id;

    SUBCASE("valid records")
    {
        const nlohmann::json j = {record(ia, 1, 10, 10), record(ia, 2, 40, 50), record(ib, 3, 0, 0, 100, 100)};
        const auto r = ingest_predictions(j, m);
        REQUIRE(r.detections.size() == 3);
        CHECK(r.rejected.empty());
        CHECK(r.detections[0].type == PitType::BPD);
        CHECK(r.detections[0].source == Source::External);
        CHECK(r.detections[0].bbox == Rect{10, 10, 13, 13});
        CHECK(r.detections[2].tile_id == "b");
        CHECK(r.detections[2].wafer_x == 150.0);
        CHECK(r.detections[1].score == doctest::Approx(0.9));
    }
    SUBCASE("rejections are itemized")
    {
        nlohmann::json j = {record(ia, 7, 1, 1), record(42, 1, 1, 1), record(ia, 1, 98, 10), record(ia, 1, 5, 5),
                            nlohmann::json{{"image_id", ia}}};
        const auto r = ingest_predictions(j, m);
        CHECK(r.detections.size() == 1);
        REQUIRE(r.rejected.size() == 4);
        CHECK(r.rejected[0].index == 0);
        CHECK(r.rejected[0].reason == "unknown-category");
        CHECK(r.rejected[1].reason == "unknown-image");
        CHECK(r.rejected[2].reason == "out-of-bounds");
        CHECK(r.rejected[3].reason == "bad-record");
    }
    SUBCASE("duplicates are kept once")
    {
        const nlohmann::json j = {record(ia, 2, 10, 10), record(ia, 2, 10, 10), record(ia, 3, 10, 10)};
        const auto r = ingest_predictions(j, m);
        CHECK(r.detections.size() == 2);
        CHECK(r.duplicates == 1);
    }
    SUBCASE("a dataset object is accepted")
    {
        const nlohmann::json j = {{"annotations", {record(ia, 1, 10, 10)}}};
        CHECK(ingest_predictions(j, m).detections.size() == 1);
        CHECK_THROWS_AS(ingest_predictions(nlohmann::json{{"x", 1}}, m), FormatError);
    }
}

TEST_CASE("detections survive a JSON round trip")
{
    TileManifest m;
    m.tiles = {tile("a", 2, 1, 4)};
    Detection d = at(PitType::TSD, m.tiles[0], 12.5, 30.25, 0.35);
    d.mask = BinaryMask(5, 5, true);
    const auto back = detections_from_json(detections_to_json({d}));
    REQUIRE(back.size() == 1);
    CHECK(back[0].type == PitType::TSD);
    CHECK(back[0].bbox == d.bbox);
    CHECK(back[0].wafer_x == d.wafer_x);
    CHECK(back[0].mask == d.mask);
    CHECK(back[0].tile_id == "a");
}

TEST_CASE("tile and wafer coordinates round-trip")
{
    TileManifest m;
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0, 1);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m.tiles.push_back(tile("t" + std::to_string(c) + std::to_string(r), c, r, 1, 1292, 968, 40));
    for (const auto& t : m.tiles)
        for (int k = 0; k < 20; ++k) {
            const Detection d = at(PitType::TED, t, u(rng) * t.width, u(rng) * t.height, 0.35);
            const Point o = t.origin();
            CHECK(std::abs(d.wafer_x - o.x - d.x) <= 1e-9);
            CHECK(std::abs(d.wafer_y - o.y - d.y) <= 1e-9);
        }
    CHECK(m.tiles[5].origin() == Point{1 * 1252, 1 * 928});
}

TEST_CASE("density units")
{
    CHECK(density_per_cm2(100, 100.0) == 1.0e6);
    CHECK(density_per_cm2(0, 100.0) == 0.0);

    TileManifest m;
    m.pixel_size_um = 1.0;
    m.tiles = {tile("a", 0, 0, 1, 300, 300)};
    std::vector<Detection> list;
    for (int k = 0; k < 100; ++k) list.push_back(at(PitType::BPD, m.tiles[0], 100.5 + k % 10 * 9, 200.5 + k / 10 * 9, 1.0));
    const auto r = density_map(list, m, 100.0);
    const auto& map = r.maps[index_of(PitType::BPD)];
    CHECK(map.nx == 3);
    CHECK(map.at(1, 2) == 100);
    CHECK(map.density(1, 2) == 1.0e6);
    CHECK(map.total() == 100);
    CHECK(r.maps[index_of(PitType::TED)].total() == 0);
}

TEST_CASE("density totals equal deduplicated counts")
{
    TileManifest m;
    m.pixel_size_um = 0.5;
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 4; ++c) m.tiles.push_back(tile("t" + std::to_string(c) + "_" + std::to_string(r), c, r, 1, 200, 150, 20));
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> u(0, 1);
    std::uniform_int_distribution<int> ty(0, 2);
    std::vector<Detection> list;
    for (const auto& t : m.tiles)
        for (int k = 0; k < 60; ++k)
            list.push_back(at(static_cast<PitType>(ty(rng)), t, u(rng) * t.width, u(rng) * t.height, 0.5));
    for (double bin : {10.0, 25.0, 100.0}) {
        const auto r = density_map(list, m, bin);
        CHECK(r.out_of_bounds.empty());
        std::array<long long, 3> kept{};
        for (const auto& d : r.kept) ++kept[index_of(d.type)];
        for (PitType t : kPitTypes) CHECK(r.maps[index_of(t)].total() == kept[index_of(t)]);
        CHECK(r.kept.size() + r.duplicates_removed == list.size());
    }
    Detection outside = list.front();
    outside.wafer_x = -5;
    CHECK(density_map({outside}, m, 50.0).out_of_bounds.size() == 1);
}

TEST_CASE("detections repeated in an overlap strip are counted once")
{
    TileManifest m;
    m.pixel_size_um = 1.0;
    m.tiles = {tile("a", 0, 0, 1, 100, 100, 20), tile("b", 1, 0, 1, 100, 100, 20)};
    std::vector<Detection> base;
    for (int k = 0; k < 10; ++k) base.push_back(at(PitType::TED, m.tiles[0], 10 + 8 * k, 15 + 7 * k, 1.0));
    for (int k = 0; k < 5; ++k) base.push_back(at(PitType::BPD, m.tiles[1], 40 + 8 * k, 20 + 9 * k, 1.0));
    std::vector<Detection> doubled = base;
    // Tile b starts at wafer x = 80: re-detect a's pits in the shared strip.
    for (const auto& d : base)
        if (d.tile_id == "a" && d.wafer_x >= 80) doubled.push_back(at(d.type, m.tiles[1], d.wafer_x - 80 + 0.5, d.y, 1.0));
    REQUIRE(doubled.size() > base.size());
    const auto a = density_map(base, m, 10.0);
    const auto b = density_map(doubled, m, 10.0);
    CHECK(b.duplicates_removed == doubled.size() - base.size());
    for (PitType t : kPitTypes) CHECK(a.maps[index_of(t)].counts == b.maps[index_of(t)].counts);
}

TEST_CASE("per-part counts")
{
    TileManifest m;
    for (int p = 1; p <= 20; ++p) m.tiles.push_back(tile("p" + std::to_string(p), p - 1, 0, p));
    SUBCASE("only part 9")
    {
        std::vector<Detection> list;
        for (int k = 0; k < 7; ++k) list.push_back(at(static_cast<PitType>(k % 3), m.tiles[8], 10 + k, 10, 0.35));
        const auto pc = part_counts(list, m);
        for (int p = 1; p <= 20; ++p) CHECK(pc.total(p) == (p == 9 ? 7 : 0));
        CHECK(pc.counts[8] == std::array<long long, 3>{3, 2, 2});
        CHECK_FALSE(pc.dominant(1).has_value());
    }
    SUBCASE("TED dominates in parts 8, 12 and 13")
    {
        std::vector<Detection> list;
        for (int p = 1; p <= 20; ++p) {
            const bool ted = p == 8 || p == 12 || p == 13;
            for (int k = 0; k < (ted ? 2 : 5); ++k) list.push_back(at(PitType::BPD, m.tiles[p - 1], 5 + 3 * k, 5, 0.35));
            for (int k = 0; k < (ted ? 5 : 2); ++k) list.push_back(at(PitType::TED, m.tiles[p - 1], 5 + 3 * k, 50, 0.35));
            list.push_back(at(PitType::TSD, m.tiles[p - 1], 50, 50, 0.35));
        }
        const auto pc = part_counts(list, m);
        for (int p = 1; p <= 20; ++p) {
            const bool ted = p == 8 || p == 12 || p == 13;
            CHECK(pc.dominant(p) == (ted ? PitType::TED : PitType::BPD));
            CHECK(pc.total(p) == 8);
        }
    }
    Detection stray;
    stray.tile_id = "nowhere";
    CHECK_THROWS_AS(part_counts({stray}, m), DataError);
}

TEST_CASE("equivalent radius")
{
    const auto b = burgers_radius(100, 1.0);
    CHECK(b.radius_um == doctest::Approx(5.6419).epsilon(1e-5));
    CHECK(b.radius_px == doctest::Approx(5.6419).epsilon(1e-5));
    CHECK(b.size_class == "large");
    CHECK(burgers_radius(100, 2.0).radius_um == 2 * b.radius_um);
    CHECK(burgers_radius(100, 0.35).size_class == "small");
    CHECK(burgers_radius(100, 0.5).size_class == "medium");
    CHECK_THROWS_AS(burgers_radius(0, 1.0), DataError);
}

TEST_CASE("tile manifests")
{
    testing::TempDir dir("manifest");
    {
        std::ofstream f(dir / "m.csv");
        f << "tile_id,image_path,col,row,part,overlap_px\n"
          << "a,img/a.png,0,0,1,10\n"
          << "b,img/b.png,1,0,20,10\n";
    }
    const auto m = read_manifest(dir / "m.csv");
    REQUIRE(m.tiles.size() == 2);
    CHECK(m.tiles[1].part == 20);
    CHECK(m.tiles[1].image_id == 2);
    CHECK(m.tiles[0].image_path == dir / "img/a.png");
    CHECK(m.tiles[1].origin() == Point{1282, 0});

    {
        std::ofstream f(dir / "m.json");
        f << R"({"pixel_size_um": 0.5, "tiles": [{"tile_id": "x", "image_path": "x.png", "col": 0, "row": 0, "part": 3}]})";
    }
    const auto j = read_manifest(dir / "m.json");
    CHECK(j.pixel_size_um == 0.5);
    CHECK(j.tiles[0].part == 3);

    {
        std::ofstream f(dir / "dup.csv");
        f << "tile_id,image_path,col,row,part,overlap_px\na,a.png,0,0,1,0\nb,b.png,0,0,2,0\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "dup.csv"), DataError);
    {
        std::ofstream f(dir / "part.csv");
        f << "tile_id,image_path,col,row,part,overlap_px\na,a.png,0,0,21,0\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "part.csv"), DataError);
    {
        std::ofstream f(dir / "bad.csv");
        f << "tile_id,image_path,col,row,part,overlap_px\na,a.png,zero,0,1,0\n";
    }
    CHECK_THROWS_AS(read_manifest(dir / "bad.csv"), FormatError);
}

TEST_CASE("built-in detector on dictionary patches")
{
    const auto dict = testing::tile_dictionary(12, 21);
    std::mt19937_64 rng(22);
    synth::BackgroundPool pool;
    pool.images.push_back(quantize_u8(pitgen::background(256, 256, rng)));
    pool.ids.push_back("clean");

    SUBCASE("five pasted pits")
    {
        synth::SceneSpec spec;
        spec.width = spec.height = 256;
        spec.counts = {synth::CountRange{2, 2}, synth::CountRange{2, 2}, synth::CountRange{1, 1}};
        spec.allow_overlap = false;
        for (std::uint64_t seed = 0; seed < 5; ++seed) {
            const auto scene = synth::compose_scene(spec, dict, pool, seed);
            REQUIRE(scene.instances.size() == 5);
            const auto det = detect_tile(scene.image, dict, DetectorConfig{});
            INFO("scene seed ", seed);
            CHECK(det.detections.size() == 5);
            for (const auto& in : scene.instances) {
                int matched = 0;
                for (const auto& d : det.detections)
                    if (std::hypot(d.x - in.cx, d.y - in.cy) < 4) matched += d.type == in.type;
                CHECK(matched == 1);
            }
            for (const auto& d : det.detections) {
                CHECK(d.score > 0.0);
                CHECK(d.score <= 1.0);
            }
            const auto again = detect_tile(scene.image, dict, DetectorConfig{});
            CHECK(detections_to_json(again.detections) == detections_to_json(det.detections));
        }
    }
    SUBCASE("blank background")
    {
        CHECK(detect_tile(pool.images[0], dict, DetectorConfig{}).detections.empty());
    }
    SUBCASE("an empty dictionary is a configuration error")
    {
        CHECK_THROWS_AS(detect_tile(pool.images[0], dictionary::Dictionary{}, DetectorConfig{}), ConfigError);
    }
}
