#pragma once

#include "etchpit/image.hpp"
#include "etchpit/types.hpp"

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

/// Procedural etch-pit imagery for fixtures, demos and the acceptance suite.
namespace etchpit::pitgen {

/// One rendered pit. Semi-axes in pixels; angle in radians from +x.
struct PitShape {
    PitType type = PitType::TED;
    double cx = 0.0;
    double cy = 0.0;
    double a = 5.0;  // semi-major
    double b = 5.0;  // semi-minor
    double angle = 0.0;
    double level = 0.22;       // floor intensity of the pit
    double core_level = 0.08;  // intensity at the dislocation core
    double core_radius = 1.5;
    double core_shift = 0.0;   // along the major axis, fraction of a
    double egg = 0.0;          // widening towards +major, sea-shell asymmetry
};

/// Type-typical random shape centred at (cx, cy): TED round r 4.5-6, TSD
/// round r 9-12, BPD sea-shell with semi-major 8-10.5 and ratio 2.0-2.4
/// lying near the x axis.
PitShape random_pit(PitType type, double cx, double cy, std::mt19937_64& rng);

/// Bright field near 0.72 with slow undulation and pixel noise.
GrayImage background(int width, int height, std::mt19937_64& rng, double level = 0.72);

/// Darkens `img` by the pit (min-composite, anti-aliased rim).
void render_pit(GrayImage& img, const PitShape& pit);

/// Bounding half-extent of a rendered pit.
double pit_extent(const PitShape& pit);

struct PitSample {
    GrayImage image;
    PitType type = PitType::TED;
    PitShape shape;
};

/// A single pit centred on its own background canvas (pit extent + margin).
PitSample pit_patch(PitType type, std::mt19937_64& rng, int margin = 14);

/// `per_type` samples of each type, types interleaved BPD, TED, TSD, ...
std::vector<PitSample> pit_library(int per_type, std::uint64_t seed, int margin = 14);

/// Class 1: one pit; class 0: two overlapping pits. Patches cropped around
/// the pits with a 10-px border.
struct QualitySample {
    GrayImage image;
    int label = 1;
};
std::vector<QualitySample> single_vs_double(int per_class, std::uint64_t seed);

/// A tile with randomly placed, non-overlapping pits and a shading gradient.
struct TileTruth {
    GrayImage image;
    std::vector<PitShape> pits;
};
TileTruth wafer_tile(int width, int height, int n_pits, double shading, std::mt19937_64& rng);

/// Writes cols x rows tiles, manifest.csv, the pit list (truth.csv and
/// box-only COCO truth.json) and a pit-free texture seed (seed.png) into
/// `dir`. Parts cycle through 1..20.
void write_wafer_fixture(const std::filesystem::path& dir, int cols, int rows, int tile_w, int tile_h,
                         int pits_per_tile, std::uint64_t seed, int overlap = 16);

}  // namespace etchpit::pitgen
