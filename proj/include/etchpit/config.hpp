#pragma once

#include "etchpit/analyze.hpp"
#include "etchpit/cluster.hpp"
#include "etchpit/embed.hpp"
#include "etchpit/quality.hpp"
#include "etchpit/synth.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// Pipeline configuration: one JSON document with a section per module.
namespace etchpit::config {

struct IoConfig {
    std::filesystem::path manifest;   // tile manifest (CSV or JSON)
    std::filesystem::path work_dir = "work";
    int jobs = 0;                     // 0 = all cores
};

struct ImgprocConfig {
    imgproc::ContrastParams contrast;
    double threshold = 0.45;
    std::string morph;                // e.g. "open:1"
    imgproc::GateLimits gate;
    int border = 10;
    int min_area = 4;
};

struct QualityConfig {
    /// none: accept every patch; model: apply `model`; scores: read `scores`;
    /// synthetic: train on generated single/double pits, then apply.
    std::string mode = "synthetic";
    std::filesystem::path model;
    std::filesystem::path scores;
    int train_per_class = 400;
    bool augment = false;
    quality::TrainParams train;
};

struct FeaturesConfig {
    std::string source = "classical";  // or "external"
    std::filesystem::path external;    // FVEC1 file keyed by patch id
};

struct ClusterConfig {
    int min_cluster_size = 0;  // 0 = max(15, N/100)
    int min_samples = 10;
};

struct SynthConfig {
    int n = 50;
    std::string ranges = "low";  // low | high
    int width = 512;
    int height = 512;
    std::vector<std::filesystem::path> background_seeds;
    int backgrounds = 2;
    int background_size = 1024;  // grown square; scenes are random crops of it
    int texture_window = 7;
    double texture_epsilon = 0.1;
    bool allow_overlap = true;
    int feather = 2;
    std::string placement = "random";  // random | lagb
    synth::LagbParams lagb;
};

struct AnalyzeConfig {
    std::string detect_on = "tiles";      // tiles | synth
    std::filesystem::path predictions;    // external COCO results; replaces the built-in detector
    std::filesystem::path truth;          // COCO annotations; defaults to the synth output
    double pixel_size_um = 0.35;
    double bin_um = 100.0;
    double dedup_radius_px = 6.0;
    std::vector<double> size_classes_um{2.0, 3.5};
};

struct PipelineConfig {
    std::uint64_t seed = 32;
    IoConfig io;
    ImgprocConfig imgproc;
    QualityConfig quality;
    FeaturesConfig features;
    embed::EmbeddingConfig embed;
    ClusterConfig cluster;
    SynthConfig synth;
    AnalyzeConfig analyze;

    analyze::DetectorConfig detector() const;
    synth::SceneSpec scene_spec() const;
    cluster::ClusterParams cluster_params(std::size_t n) const;
};

nlohmann::json to_json(const PipelineConfig& c);

/// Strict parse: every key must exist in the schema. Relative paths are kept
/// as written; resolve_paths() anchors them.
PipelineConfig from_json(const nlohmann::json& j);

/// Applies "section.key=value" (value parsed as JSON, else taken as a string).
void apply_override(nlohmann::json& j, const std::string& assignment);

/// Reads `path` (may be empty for defaults), applies overrides, validates.
PipelineConfig load(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

/// Makes relative paths absolute against `base`.
void resolve_paths(PipelineConfig& c, const std::filesystem::path& base);

void validate(const PipelineConfig& c);

}  // namespace etchpit::config
