#pragma once

// Shared test fixtures: rasterized shapes, planted clusters, temp dirs and
// a small typed dictionary built straight from procedural pits.

#include "etchpit/dictionary.hpp"
#include "etchpit/image.hpp"
#include "etchpit/imgproc.hpp"
#include "etchpit/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace etchpit::testing {

/// Pixel centres inside the ellipse (x-cx)^2/a^2 + (y-cy)^2/b^2 <= 1 after
/// rotating by `angle`. The canvas is sized to fit with `pad` pixels spare.
BinaryMask raster_ellipse(double a, double b, double angle = 0.0, int pad = 3, double cx_frac = 0.0,
                          double cy_frac = 0.0);
inline BinaryMask raster_disk(double r, int pad = 3) { return raster_ellipse(r, r, 0.0, pad); }

/// Two bars of `thick` x `len` crossing at their centres.
BinaryMask plus_shape(int thick = 3, int len = 21, int pad = 3);

imgproc::Blob blob_of(const BinaryMask& m);

/// Dark shape (0.1) on a bright field (0.9).
GrayImage paint(const BinaryMask& m, float fg = 0.1f, float bg = 0.9f);

/// Isotropic Gaussian clusters with centres `separation` apart on random axes.
struct Planted {
    Matrix x;
    std::vector<int> labels;
};
Planted gaussian_clusters(int k, int per_cluster, int dim, double separation, std::uint64_t seed, double sigma = 1.0);

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag = "t");
    ~TempDir();
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& s) const { return path_ / s; }

private:
    std::filesystem::path path_;
};

/// A dictionary harvested like the pipeline does (corrected, gated tile
/// patches) but typed by construction instead of clustering.
dictionary::Dictionary tile_dictionary(int n_tiles, std::uint64_t seed);

/// The single largest blob of a pit sample, with its patch.
imgproc::Patch largest_blob_patch(const GrayImage& img, double threshold = 0.45, int border = 10);

/// FNV-1a over the file bytes.
std::uint64_t hash_file(const std::filesystem::path& p);

}  // namespace etchpit::testing
