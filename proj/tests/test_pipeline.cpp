// Drives the command-line tools end to end on a small generated wafer.

#include "fixtures.hpp"

#include <doctest.h>
#include <json.hpp>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;
using etchpit::testing::TempDir;

namespace {

struct Run {
    int rc = -1;
    std::string err;
};

Run run(const fs::path& dir, const std::string& args)
{
    const fs::path log = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + args + " >/dev/null 2>'" + log.string() + "'";
    const int status = std::system(cmd.c_str());
    Run r;
    r.rc = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    std::ifstream in(log);
    std::stringstream ss;
    ss << in.rdbuf();
    r.err = ss.str();
    return r;
}

std::string cli(const std::string& rest) { return std::string("'") + ETCHPIT_CLI + "' -c config.json -q " + rest; }

nlohmann::json read_json(const fs::path& p)
{
    std::ifstream in(p);
    return nlohmann::json::parse(in);
}

}  // namespace

TEST_CASE("fixture to dictionary, then synth and evaluation")
{
    TempDir dir("pipeline");
    const fs::path fx = dir / "fx";
    REQUIRE(run(dir.path(), std::string("'") + ETCHPIT_MKFIXTURE + "' -o fx --scene-size 128").rc == 0);
    REQUIRE(fs::exists(fx / "config.json"));
    REQUIRE(fs::exists(fx / "manifest.csv"));

    for (const char* stage : {"extract", "gate", "features", "embed", "cluster", "dict"}) {
        const Run r = run(fx, cli(stage));
        INFO(stage, ": ", r.err);
        REQUIRE(r.rc == 0);
        CHECK(fs::exists(fx / "work" / stage / "summary.json"));
        CHECK(fs::exists(fx / "work" / stage / "config.resolved.json"));
    }
    for (const char* t : {"BPD", "TED", "TSD"}) CHECK(fs::is_directory(fx / "work/dict" / t));
    const auto dict = read_json(fx / "work/dict/summary.json");
    for (const char* t : {"BPD", "TED", "TSD"}) CHECK(dict["per_type"][t].get<int>() > 0);

    REQUIRE(run(fx, cli("synth --n 6 --clean")).rc == 0);
    const auto ann = read_json(fx / "work/synth/annotations.json");
    CHECK(ann["images"].size() == 6);

    // Ground truth fed back as predictions scores perfectly.
    REQUIRE(run(fx, cli("detect --on synth --predictions work/synth/annotations.json")).rc == 0);
    REQUIRE(run(fx, cli("eval")).rc == 0);
    const auto rmse = read_json(fx / "work/eval/rmse.json");
    for (const char* t : {"BPD", "TED", "TSD"}) CHECK(rmse["rmse"][t] == 0.0);

    // The built-in detector on the tiles feeds density and report.
    REQUIRE(run(fx, cli("detect")).rc == 0);
    REQUIRE(run(fx, cli("density")).rc == 0);
    CHECK(fs::exists(fx / "work/density/density_BPD.csv"));
    CHECK(fs::exists(fx / "work/density/part_counts.csv"));
    REQUIRE(run(fx, cli("report")).rc == 0);
    CHECK(fs::exists(fx / "work/report/index.md"));
}

TEST_CASE("a missing upstream artifact names its producer")
{
    TempDir dir("pipeline_missing");
    REQUIRE(run(dir.path(), std::string("'") + ETCHPIT_MKFIXTURE + "' -o fx --cols 2 --rows 1").rc == 0);
    const Run r = run(dir / "fx", cli("embed"));
    CHECK(r.rc == 3);
    CHECK(r.err.find("etchpit features") != std::string::npos);
    // A failed stage leaves no directory behind.
    CHECK_FALSE(fs::exists(dir / "fx/work/embed"));
}

TEST_CASE("configuration errors exit with code 2")
{
    TempDir dir("pipeline_config");
    REQUIRE(run(dir.path(), std::string("'") + ETCHPIT_MKFIXTURE + "' -o fx --cols 2 --rows 1").rc == 0);
    const Run bad_key = run(dir / "fx", cli("extract --set embed.n_neighbours=5"));
    CHECK(bad_key.rc == 2);
    CHECK(bad_key.err.find("embed.n_neighbours") != std::string::npos);
    CHECK(run(dir / "fx", cli("extract --set imgproc.threshold=2")).rc == 2);
    CHECK(run(dir / "fx", cli("nonsense")).rc == 2);
    const Run shown = run(dir / "fx", cli("config"));
    CHECK(shown.rc == 0);
}
