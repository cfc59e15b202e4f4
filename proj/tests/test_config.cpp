#include "etchpit/config.hpp"
#include "etchpit/error.hpp"
#include "etchpit/pipeline.hpp"

#include "fixtures.hpp"

#include <doctest.h>

#include <fstream>

using namespace etchpit;
using namespace etchpit::config;

namespace {

std::string config_error(const nlohmann::json& j)
{
    try {
        validate(from_json(j));
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST_CASE("defaults round-trip through JSON")
{
    const PipelineConfig c;
    const nlohmann::json j = to_json(c);
    CHECK(to_json(from_json(j)) == j);
    CHECK(j["seed"] == 32);
    CHECK(j["embed"]["n_neighbors"] == 10);
    CHECK(j["embed"]["min_dist"] == 0.3);
    CHECK(j["embed"]["n_components"] == 3);
    CHECK(j["imgproc"]["max_lengthiness"] == 3.0);
    CHECK(j["imgproc"]["min_compactness"] == 0.6);
    CHECK(j["imgproc"]["min_circularity"] == 0.6);
    CHECK_NOTHROW(validate(c));
}

TEST_CASE("unknown keys are rejected by name")
{
    const std::string top = config_error({{"sed", 1}});
    CHECK(top.find("'sed'") != std::string::npos);
    const std::string nested = config_error({{"embed", {{"n_neighbours", 10}}}});
    CHECK(nested.find("embed.n_neighbours") != std::string::npos);
    CHECK(config_error({{"embed", 3}}).find("must be an object") != std::string::npos);
    CHECK(config_error(nlohmann::json::array()).find("JSON object") != std::string::npos);
}

TEST_CASE("values of the wrong type are rejected")
{
    CHECK(config_error({{"embed", {{"n_neighbors", "ten"}}}}).find("embed.n_neighbors") != std::string::npos);
    CHECK(config_error({{"embed", {{"n_neighbors", 10.5}}}}).find("an integer") != std::string::npos);
    CHECK(config_error({{"seed", -1}}).find("non-negative") != std::string::npos);
    CHECK(config_error({{"embed", {{"method", "isomap"}}}}).find("umap, pca, tsne") != std::string::npos);
    CHECK(config_error({{"synth", {{"allow_overlap", 1}}}}).find("true or false") != std::string::npos);
}

TEST_CASE("validation names the offending key")
{
    CHECK(config_error({{"imgproc", {{"threshold", 1.5}}}}).find("imgproc.threshold") != std::string::npos);
    CHECK(config_error({{"imgproc", {{"morph", "close:1"}}}}).find("imgproc.morph") != std::string::npos);
    CHECK(config_error({{"synth", {{"texture_window", 6}}}}).find("synth.texture_window") != std::string::npos);
    CHECK(config_error({{"synth", {{"width", 2048}}}}).find("synth.background_size") != std::string::npos);
    CHECK(config_error({{"cluster", {{"min_cluster_size", 1}}}}).find("cluster.min_cluster_size") != std::string::npos);
    CHECK(config_error({{"quality", {{"mode", "model"}}}}).find("quality.model") != std::string::npos);
    CHECK(config_error({{"analyze", {{"size_classes_um", {3.0, 2.0}}}}}).find("size_classes_um") != std::string::npos);
    CHECK(config_error({{"analyze", {{"pixel_size_um", 0}}}}).find("analyze.pixel_size_um") != std::string::npos);
}

TEST_CASE("overrides")
{
    nlohmann::json j = to_json(PipelineConfig{});
    apply_override(j, "embed.n_neighbors=15");
    apply_override(j, "synth.ranges=high");
    apply_override(j, "synth.allow_overlap=false");
    apply_override(j, "seed=7");
    const auto c = from_json(j);
    CHECK(c.embed.n_neighbors == 15);
    CHECK(c.synth.ranges == "high");
    CHECK_FALSE(c.synth.allow_overlap);
    CHECK(c.seed == 7);
    CHECK(c.scene_spec().counts[index_of(PitType::BPD)].hi == 200);
    CHECK_FALSE(c.scene_spec().allow_overlap);

    CHECK_THROWS_AS(apply_override(j, "no_equals_sign"), ConfigError);
    CHECK_THROWS_AS(apply_override(j, "a.b.c=1"), ConfigError);
    apply_override(j, "embed.bogus=1");
    CHECK_THROWS_WITH_AS(from_json(j), doctest::Contains("embed.bogus"), ConfigError);
}

TEST_CASE("loading anchors relative paths at the config file")
{
    testing::TempDir dir("config");
    std::filesystem::create_directories(dir / "sub");
    {
        std::ofstream f(dir / "sub/run.json");
        f << R"({"io": {"manifest": "tiles/manifest.csv", "work_dir": "out"},
                 "synth": {"background_seeds": ["seed.png", "/abs/seed.png"]}})";
    }
    const auto c = load(dir / "sub/run.json", {"cluster.min_samples=4"});
    CHECK(c.io.manifest == dir / "sub/tiles/manifest.csv");
    CHECK(c.io.work_dir == dir / "sub/out");
    CHECK(c.synth.background_seeds[0] == dir / "sub/seed.png");
    CHECK(c.synth.background_seeds[1] == "/abs/seed.png");
    CHECK(c.cluster.min_samples == 4);
    CHECK(c.cluster_params(5000).min_cluster_size == 50);
    CHECK(c.cluster_params(5000).min_samples == 4);

    {
        std::ofstream f(dir / "broken.json");
        f << "{ not json";
    }
    CHECK_THROWS_AS(load(dir / "broken.json"), ConfigError);
    CHECK_THROWS_AS(load(dir / "missing.json"), ConfigError);
    CHECK_THROWS_AS(load({}, {"imgproc.threshold=0"}), ConfigError);
    CHECK(load({}).io.work_dir == std::filesystem::current_path() / "work");
}

TEST_CASE("exit codes by error kind")
{
    CHECK(pipeline::exit_code(ConfigError("x")) == 2);
    CHECK(pipeline::exit_code(DataError("x")) == 3);
    CHECK(pipeline::exit_code(FormatError("x")) == 3);
    CHECK(pipeline::exit_code(pipeline::MissingArtifact("a/b.csv", "extract")) == 3);
    CHECK(pipeline::exit_code(std::runtime_error("x")) == 1);
}
