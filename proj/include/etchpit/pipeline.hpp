#pragma once

#include "etchpit/analyze.hpp"
#include "etchpit/config.hpp"
#include "etchpit/error.hpp"

#include <json.hpp>

#include <array>
#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

/// File-based stages. Each stage reads the documented outputs of earlier
/// stages under <work_dir>/<stage>/ and replaces its own directory.
namespace etchpit::pipeline {

inline constexpr std::array<std::string_view, 11> kStages = {
    "extract", "gate", "features", "embed", "cluster", "dict", "synth", "detect", "eval", "density", "report"};

/// An input file another stage should have written.
class MissingArtifact : public DataError {
public:
    MissingArtifact(const std::filesystem::path& path, std::string_view producer);
    const std::string& producer() const { return producer_; }

private:
    std::string producer_;
};

struct StageResult {
    std::string stage;
    std::vector<std::filesystem::path> artifacts;  // relative to the stage directory
    std::vector<std::string> warnings;
    nlohmann::json summary = nlohmann::json::object();
};

std::filesystem::path stage_dir(const config::PipelineConfig& cfg, std::string_view stage);

/// Runs one stage. Writes config.resolved.json and summary.json next to the
/// stage outputs. Throws ConfigError / DataError subclasses on failure.
StageResult run_subcommand(std::string_view name, const config::PipelineConfig& cfg, std::ostream* log = nullptr);

/// 0 ok, 2 configuration error, 3 data error, 1 anything else.
int exit_code(const std::exception& e);

// ---- report ------------------------------------------------------------------

/// Truth-vs-predicted scatter of per-image counts, one panel per pit type
/// (x = truth, y = predicted, grey diagonal = perfect count).
void write_rmse_plot(const std::filesystem::path& path, const analyze::RmseReport& report);

/// Bundles the density PNGs, count tables and RMSE plot into <dir> with an index.md.
StageResult build_report(const config::PipelineConfig& cfg, const std::filesystem::path& dir);

}  // namespace etchpit::pipeline
