// etchpit: run one pipeline stage.
//
//   etchpit extract -c run.json
//   etchpit synth -c run.json --n 50 --ranges low
//   etchpit detect -c run.json --on synth --predictions results.json
//
// Exit codes: 0 ok, 2 configuration error, 3 data error.

#include "etchpit/config.hpp"
#include "etchpit/pipeline.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::optional<int> jobs;
    std::optional<std::string> work;
    std::optional<std::string> manifest;
    std::optional<int> n;
    std::optional<std::string> ranges;
    bool clean = false;
    std::optional<std::string> predictions;
    std::optional<std::string> on;
    std::optional<std::string> truth;
    bool quiet = false;
};

std::vector<std::string> overrides(const Options& o)
{
    std::vector<std::string> out = o.sets;
    auto quoted = [](const std::string& s) { return nlohmann::json(s).dump(); };
    if (o.seed) out.push_back("seed=" + std::to_string(*o.seed));
    if (o.jobs) out.push_back("io.jobs=" + std::to_string(*o.jobs));
    if (o.work) out.push_back("io.work_dir=" + quoted(*o.work));
    if (o.manifest) out.push_back("io.manifest=" + quoted(*o.manifest));
    if (o.n) out.push_back("synth.n=" + std::to_string(*o.n));
    if (o.ranges) out.push_back("synth.ranges=" + quoted(*o.ranges));
    if (o.clean) out.push_back("synth.allow_overlap=false");
    if (o.predictions) out.push_back("analyze.predictions=" + quoted(*o.predictions));
    if (o.on) out.push_back("analyze.detect_on=" + quoted(*o.on));
    if (o.truth) out.push_back("analyze.truth=" + quoted(*o.truth));
    return out;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Etch-pit analysis pipeline for KOH-etched SiC wafer images"};
    app.require_subcommand(1);
    app.fallthrough();

    Options o;
    app.add_option("-c,--config", o.config, "JSON config file");
    app.add_option("--set", o.sets, "Override a config key, e.g. --set embed.min_dist=0.1")->allow_extra_args(false);
    app.add_option("--seed", o.seed, "Master seed");
    app.add_option("--jobs", o.jobs, "Worker threads (default: all cores)")->check(CLI::PositiveNumber);
    app.add_option("--work", o.work, "Work directory holding the stage outputs");
    app.add_option("--manifest", o.manifest, "Tile manifest (CSV or JSON)");
    app.add_flag("-q,--quiet", o.quiet, "Only print errors");

    std::string stage;
    for (auto name : etchpit::pipeline::kStages) {
        auto* sub = app.add_subcommand(std::string(name));
        sub->callback([&stage, name] { stage = std::string(name); });
        if (name == "synth") {
            sub->description("Compose synthetic scenes with COCO annotations");
            sub->add_option("--n", o.n, "Number of scenes")->check(CLI::PositiveNumber);
            sub->add_option("--ranges", o.ranges, "Count ranges: low or high");
            sub->add_flag("--clean", o.clean, "Forbid overlapping pits");
        } else if (name == "detect") {
            sub->description("Detect and classify pits, or ingest external predictions");
            sub->add_option("--predictions", o.predictions, "COCO results JSON to ingest");
            sub->add_option("--on", o.on, "tiles or synth");
        } else if (name == "eval") {
            sub->description("Per-type count RMSE against annotations");
            sub->add_option("--truth", o.truth, "COCO annotations (default: the synth output)");
        } else if (name == "extract") {
            sub->description("Segment candidate pits in every tile");
        } else if (name == "gate") {
            sub->description("Patch quality gate");
        } else if (name == "features") {
            sub->description("Patch feature vectors");
        } else if (name == "embed") {
            sub->description("Reduce features to a low-dimensional embedding");
        } else if (name == "cluster") {
            sub->description("HDBSCAN clustering and type assignment");
        } else if (name == "dict") {
            sub->description("Build the typed etch-pit dictionary");
        } else if (name == "density") {
            sub->description("Deduplicate overlaps, density maps and per-part counts");
        } else if (name == "report") {
            sub->description("Bundle density maps, count tables and RMSE plots");
        }
    }
    bool show = false;
    auto* cfg_cmd = app.add_subcommand("config", "Print the resolved configuration");
    cfg_cmd->callback([&show] { show = true; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        const auto cfg = etchpit::config::load(o.config, overrides(o));
        if (show) {
            std::cout << etchpit::config::to_json(cfg).dump(2) << '\n';
            return 0;
        }
        const auto res = etchpit::pipeline::run_subcommand(stage, cfg, o.quiet ? nullptr : &std::cerr);
        if (!o.quiet) std::cout << stage << ": wrote " << etchpit::pipeline::stage_dir(cfg, stage).string() << '\n';
        (void)res;
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return etchpit::pipeline::exit_code(e);
    }
}
