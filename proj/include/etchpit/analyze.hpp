#pragma once

#include "etchpit/coco.hpp"
#include "etchpit/dictionary.hpp"
#include "etchpit/imgproc.hpp"
#include "etchpit/quality.hpp"
#include "etchpit/types.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

/// Wafer-level detection, evaluation and aggregation.
namespace etchpit::analyze {

// ---- tiles ------------------------------------------------------------------

struct TileRecord {
    std::string tile_id;
    std::filesystem::path image_path;
    int col = 0;
    int row = 0;
    int part = 1;  // 1..20
    int overlap_px = 0;
    int width = 1292;
    int height = 968;
    int image_id = 0;

    /// Wafer-pixel origin: col * (width - overlap), row * (height - overlap).
    Point origin() const { return {col * (width - overlap_px), row * (height - overlap_px)}; }
};

struct TileManifest {
    std::vector<TileRecord> tiles;
    double pixel_size_um = 0.35;  // assumed; the optics give magnification only
    std::string magnification = "20x";

    const TileRecord* find_tile(const std::string& id) const;
    const TileRecord* find_image(int image_id) const;
};

/// CSV (header tile_id,image_path,col,row,part,overlap_px[,width,height,image_id])
/// or JSON ({"pixel_size_um":..., "tiles":[...]}). Relative image paths are
/// resolved against the manifest's directory. Checks (col,row) uniqueness and part range.
TileManifest read_manifest(const std::filesystem::path& path);
void validate(const TileManifest& m);

/// Image lookup used when ingesting detections: one virtual tile per COCO image.
TileManifest manifest_from_coco(const coco::Dataset& d, double pixel_size_um = 0.35);

// ---- detections ---------------------------------------------------------------

enum class Source { Builtin, External };

struct Detection {
    PitType type = PitType::TED;
    Rect bbox;          // tile coordinates
    BinaryMask mask;    // bbox-sized; may be empty for box-only records
    double area = 0.0;  // pixels
    double score = 1.0;
    Source source = Source::Builtin;
    std::string tile_id;
    int image_id = 0;
    double x = 0.0;     // centre, tile coordinates
    double y = 0.0;
    double wafer_x = 0.0;
    double wafer_y = 0.0;
    double radius_px = 0.0;
    double radius_um = 0.0;
};

/// Fills wafer coordinates and radii from the tile record.
void locate(Detection& d, const TileRecord& tile, double pixel_size_um);

struct DetectorConfig {
    imgproc::ContrastParams contrast;
    double threshold = 0.45;
    imgproc::MorphPlan morph;
    imgproc::GateLimits gate;
    int border = 10;
    std::size_t min_area = 4;
};

struct TileDetections {
    std::vector<Detection> detections;
    std::size_t shape_rejected = 0;    // went to the unclassified bucket
    std::size_t quality_rejected = 0;
};

/// correct_contrast -> segment -> shape gate -> quality gate (on the raw
/// crop) -> classical features of the corrected patch -> dictionary classification.
TileDetections detect_tile(const GrayImage& img, const dictionary::Dictionary& dict, const DetectorConfig& cfg,
                           const quality::QualityModel* gate = nullptr);

struct Rejection {
    std::size_t index = 0;  // record position in the input
    std::string reason;     // unknown-image, out-of-bounds, unknown-category, bad-record
};

struct IngestReport {
    std::vector<Detection> detections;
    std::vector<Rejection> rejected;
    std::size_t duplicates = 0;
};

/// Accepts a bare results list or a dataset with "annotations". Image ids are
/// resolved against the manifest; identical (image, category, box) records
/// are kept once.
IngestReport ingest_predictions(const nlohmann::json& results, const TileManifest& manifest);

nlohmann::json detections_to_json(const std::vector<Detection>& d);
std::vector<Detection> detections_from_json(const nlohmann::json& j);

// ---- evaluation ---------------------------------------------------------------

/// sqrt(mean((truth - predicted)^2)).
double rmse(std::span<const double> truth, std::span<const double> predicted);

using CountTable = std::map<int, std::array<double, 3>>;  // image id -> per-type counts

CountTable count_annotations(const coco::Dataset& d);
CountTable count_detections(const std::vector<Detection>& d);

struct ImageError {
    int image_id = 0;
    std::array<double, 3> truth{};
    std::array<double, 3> predicted{};
    std::array<double, 3> error{};  // predicted - truth
};

struct RmseReport {
    std::string dataset_id;
    std::array<double, 3> rmse{};
    std::vector<ImageError> images;
    std::vector<int> excluded;  // predicted images without truth
};

/// Images missing from `predicted` count as zero detections.
RmseReport evaluate(const CountTable& truth, const CountTable& predicted, const std::string& dataset_id);
nlohmann::json to_json(const RmseReport& r);
void write_errors_csv(const std::filesystem::path& path, const RmseReport& r);

// ---- aggregation --------------------------------------------------------------

struct DedupResult {
    std::vector<Detection> kept;
    std::size_t removed = 0;
};

/// Same-type detections from different tiles closer than `radius_px` in wafer
/// pixels: the one nearer its own tile centre survives.
DedupResult dedup_overlaps(const std::vector<Detection>& d, const TileManifest& m, double radius_px = 6.0);

struct DensityMap {
    PitType type = PitType::TED;
    double bin_um = 100.0;
    int nx = 0;
    int ny = 0;
    std::vector<long long> counts;  // row-major

    long long at(int ix, int iy) const { return counts[static_cast<std::size_t>(iy) * nx + ix]; }
    /// count / (bin_um)^2 * 1e8, in cm^-2.
    double density(int ix, int iy) const;
    long long total() const;
};

/// count / bin area in cm^2 for a square bin of the given side.
double density_per_cm2(long long count, double bin_um);

struct DensityResult {
    std::array<DensityMap, 3> maps;
    std::vector<Detection> kept;
    std::size_t duplicates_removed = 0;
    std::vector<Detection> out_of_bounds;
};

DensityResult density_map(const std::vector<Detection>& d, const TileManifest& m, double bin_um,
                          double dedup_radius_px = 6.0);

struct PartCounts {
    std::array<std::array<long long, 3>, 20> counts{};
    /// Type with the most detections in part p (1-based); empty if none.
    std::optional<PitType> dominant(int part) const;
    long long total(int part) const;
};

PartCounts part_counts(const std::vector<Detection>& d, const TileManifest& m);

struct SizeClasses {
    std::vector<double> upper_um{2.0, 3.5};  // class k: radius < upper_um[k]
    std::vector<std::string> names{"small", "medium", "large"};
};

struct BurgersRadius {
    double radius_px = 0.0;
    double radius_um = 0.0;
    std::string size_class;
};

/// r = sqrt(area / pi); throws DataError for a zero-area mask.
BurgersRadius burgers_radius(double area_px, double pixel_size_um, const SizeClasses& classes = {});

void write_density_csv(const std::filesystem::path& path, const DensityMap& m);
void write_density_png(const std::filesystem::path& path, const DensityMap& m);
void write_part_counts_csv(const std::filesystem::path& path, const PartCounts& p);

}  // namespace etchpit::analyze
