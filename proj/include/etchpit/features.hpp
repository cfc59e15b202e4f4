#pragma once

#include "etchpit/imgproc.hpp"
#include "etchpit/matrix.hpp"

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace etchpit::features {

enum class FeatureSource { Classical, External };

/// Feature vectors for a set of patches, one row each.
struct FeatureSet {
    std::vector<std::string> ids;
    Matrix values;
    FeatureSource source = FeatureSource::Classical;
    std::vector<std::string> flags;  // per-row note, empty when clean

    std::size_t size() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }
};

// Layout of the classical vector.
inline constexpr std::size_t kHuDim = 7;
inline constexpr std::size_t kRadialBins = 16;
inline constexpr std::size_t kHistBins = 16;
inline constexpr std::size_t kShapeDim = 4;  // area, lengthiness, compactness, circularity
inline constexpr std::size_t kClassicalDim = kHuDim + kRadialBins + kHistBins + kShapeDim;
inline constexpr int kSide = 64;

/// Otsu threshold over a 256-bin histogram of [0,1] values.
double otsu_threshold(const GrayImage& img);

/// The seven Hu invariants of a binary mask. Zero for an empty mask.
std::array<double, 7> hu_moments(const BinaryMask& m);

struct ClassicalFeatures {
    std::vector<double> values;  // kClassicalDim
    bool empty_mask = false;     // binarized patch had no foreground
};

/// Raw (unnormalized) classical features of a patch. The image is resampled
/// to 64x64 and binarized with Otsu (dark foreground) for the Hu block; the
/// radial profile is the mean intensity in 2-px rings about the foreground
/// centroid; the histogram sums to one; the shape block comes from the blob
/// in tile pixels.
ClassicalFeatures classical_features(const imgproc::Patch& patch);

/// Per-dimension min-max scaling fitted on a dataset. Constant columns map to 0.
struct MinMaxNormalizer {
    std::vector<double> lo;
    std::vector<double> hi;

    static MinMaxNormalizer fit(const Matrix& x);
    Matrix apply(const Matrix& x) const;
    std::vector<double> apply(std::span<const double> row) const;
};

/// FVEC1 exchange format: "FVEC1", u32 count, u32 dim, count*dim float32
/// (little endian, row-major), then count ids as u32 length + bytes.
void write_fvec(const std::filesystem::path& path, const FeatureSet& set);
FeatureSet read_fvec(const std::filesystem::path& path);

}  // namespace etchpit::features
