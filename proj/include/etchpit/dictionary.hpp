#pragma once

#include "etchpit/embed.hpp"
#include "etchpit/features.hpp"
#include "etchpit/imgproc.hpp"
#include "etchpit/types.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

/// The etch-pit dictionary: typed single-pit patches plus the reference
/// embedding used to classify new pits.
namespace etchpit::dictionary {

struct Entry {
    std::string id;
    PitType type = PitType::TED;
    std::string source;  // tile id
    Point origin;        // patch origin in the source tile
    GrayImage image;
    BinaryMask mask;     // pit pixels in patch coordinates
    imgproc::ShapeDescriptors descriptors;
    double area = 0.0;
};

struct Classification {
    PitType type = PitType::TED;
    double distance = 0.0;
    double score = 0.0;  // 1 / (1 + distance)
    std::vector<double> coords;
};

struct Dictionary {
    std::vector<Entry> entries;
    features::FeatureSet reference;  // raw classical features, one row per entry
    features::MinMaxNormalizer normalizer;
    Matrix coords;                   // scaled embedding of the normalized reference
    embed::EmbeddingConfig embed_config;
    std::array<std::optional<std::vector<double>>, 3> centroids;

    std::vector<const Entry*> of_type(PitType t) const;
    bool has(PitType t) const { return centroids[index_of(t)].has_value(); }

    /// Mean embedding coordinates per type.
    void compute_centroids();

    /// Maps raw features into the reference embedding (membership-weighted
    /// kNN) and picks the nearest type centroid.
    std::vector<Classification> classify(const Matrix& raw) const;
};

/// <dir>/manifest.json, <dir>/{BPD,TED,TSD}/<id>.png and <id>_mask.png,
/// <dir>/reference.fvec, <dir>/reference_embedding.csv.
void save(const std::filesystem::path& dir, const Dictionary& dict);
Dictionary load(const std::filesystem::path& dir);

}  // namespace etchpit::dictionary
