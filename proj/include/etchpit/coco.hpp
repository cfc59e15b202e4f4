#pragma once

#include "etchpit/image.hpp"

#include <json.hpp>

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

/// COCO-style instance annotations (category ids 1 = BPD, 2 = TED, 3 = TSD).
namespace etchpit::coco {

/// Uncompressed run-length encoding over the column-major pixel order,
/// starting with a background run.
struct Rle {
    int height = 0;
    int width = 0;
    std::vector<std::uint32_t> counts;
};

/// `local` is placed at `origin` inside a width x height image; pixels
/// falling outside are dropped.
Rle encode(const BinaryMask& local, Point origin, int width, int height);
BinaryMask decode(const Rle& rle);

/// The compact string form used by COCO tools for compressed RLE.
std::string counts_to_string(const std::vector<std::uint32_t>& counts);
std::vector<std::uint32_t> counts_from_string(const std::string& s);

struct Image {
    int id = 0;
    std::string file_name;
    int width = 0;
    int height = 0;
};

struct Annotation {
    int id = 0;
    int image_id = 0;
    int category_id = 0;
    std::array<double, 4> bbox{};  // x, y, w, h
    double area = 0.0;
    std::optional<Rle> segmentation;
    std::optional<double> score;
    int iscrowd = 0;
};

struct Dataset {
    std::vector<Image> images;
    std::vector<Annotation> annotations;
};

nlohmann::json to_json(const Rle& rle);
Rle rle_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Dataset& d);
Dataset dataset_from_json(const nlohmann::json& j);

void write_dataset(const std::filesystem::path& path, const Dataset& d);
Dataset read_dataset(const std::filesystem::path& path);

nlohmann::json categories_json();

}  // namespace etchpit::coco
