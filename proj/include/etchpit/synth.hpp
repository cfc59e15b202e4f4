#pragma once

#include "etchpit/coco.hpp"
#include "etchpit/dictionary.hpp"
#include "etchpit/image.hpp"
#include "etchpit/types.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// Synthetic training scenes: grown backgrounds with dictionary pits pasted in.
namespace etchpit::synth {

struct TextureParams {
    int window = 11;        // odd
    double epsilon = 0.1;   // candidates within (1 + epsilon) * min SSD
    std::uint64_t seed = 0;
};

/// Efros-Leung growth: the seed sits at the centre of the output and pixels
/// are filled most-constrained first (ties in raster order). Every output
/// value is copied from the seed.
GrayImage grow_texture(const GrayImage& seed, int width, int height, const TextureParams& params);

struct CountRange {
    int lo = 0;
    int hi = 0;
};

enum class Placement { Random, LagbLine };

struct LagbParams {
    int count = 8;
    double spacing = 0.0;  // pixels; 0 picks 1.3x the largest patch side
    double jitter = 0.15;  // fraction of the spacing, along the line
};

struct SceneSpec {
    int width = 512;
    int height = 512;
    std::array<CountRange, 3> counts{};  // indexed by PitType
    Placement placement = Placement::Random;
    LagbParams lagb;
    bool allow_overlap = true;
    int feather = 2;
    int max_retries = 100;

    /// 0..20 BPD, 0..10 TED, 0..5 TSD.
    static SceneSpec low_density();
    /// 0..200 BPD, 0..50 TED, 0..20 TSD.
    static SceneSpec high_density();
};

struct Instance {
    PitType type = PitType::TED;
    Rect bbox;         // image coordinates, tight around the mask
    BinaryMask mask;   // bbox-sized
    double cx = 0.0;   // mask centroid
    double cy = 0.0;
    std::string source_id;
    int rotation = 0;  // quarter turns applied
};

struct SyntheticScene {
    GrayImage image;
    std::vector<Instance> instances;
    std::string background_id;
    std::uint64_t seed = 0;
    std::vector<std::string> warnings;

    std::array<int, 3> counts() const;
};

struct BackgroundPool {
    std::vector<GrayImage> images;
    std::vector<std::string> ids;
};

/// Grows `count` backgrounds from the seeds (round robin), one RNG stream per background.
BackgroundPool grow_backgrounds(const std::vector<GrayImage>& seeds, int count, int width, int height,
                                const TextureParams& params);

/// Per-scene seed derived from (master seed, scene index).
std::uint64_t scene_seed(std::uint64_t master, std::size_t index);

SyntheticScene compose_scene(const SceneSpec& spec, const dictionary::Dictionary& dict, const BackgroundPool& pool,
                             std::uint64_t seed);

/// Scenes 0..n-1, composed in parallel; scene i uses scene_seed(master, i).
std::vector<SyntheticScene> compose_scenes(const SceneSpec& spec, const dictionary::Dictionary& dict,
                                           const BackgroundPool& pool, std::uint64_t master, int n);

/// Annotation records for scenes; image i is named scene_<i>.png.
coco::Dataset to_coco(const std::vector<SyntheticScene>& scenes);

/// images/scene_<i>.png, annotations.json and manifest.json under `dir`.
coco::Dataset export_dataset(const std::vector<SyntheticScene>& scenes, const std::filesystem::path& dir,
                             std::uint64_t master_seed);

}  // namespace etchpit::synth
