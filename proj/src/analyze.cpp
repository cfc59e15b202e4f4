#include "etchpit/analyze.hpp"

#include "etchpit/error.hpp"
#include "etchpit/features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <sstream>
#include <tuple>

namespace etchpit::analyze {

namespace {

std::vector<std::string> split_csv(const std::string& line)
{
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    return cells;
}

int to_int(const std::string& s, const std::string& where)
{
    try {
        std::size_t used = 0;
        const int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(where + ": expected an integer, got '" + s + "'");
    }
}

}  // namespace

const TileRecord* TileManifest::find_tile(const std::string& id) const
{
    for (const auto& t : tiles)
        if (t.tile_id == id) return &t;
    return nullptr;
}

const TileRecord* TileManifest::find_image(int image_id) const
{
    for (const auto& t : tiles)
        if (t.image_id == image_id) return &t;
    return nullptr;
}

void validate(const TileManifest& m)
{
    std::set<std::pair<int, int>> cells;
    std::set<std::string> ids;
    std::set<int> images;
    for (const auto& t : m.tiles) {
        if (!cells.insert({t.col, t.row}).second)
            throw DataError("tile manifest lists grid cell (" + std::to_string(t.col) + "," + std::to_string(t.row) + ") twice");
        if (!ids.insert(t.tile_id).second) throw DataError("tile id " + t.tile_id + " is not unique");
        if (!images.insert(t.image_id).second) throw DataError("image id " + std::to_string(t.image_id) + " is not unique");
        if (t.part < 1 || t.part > 20) throw DataError("tile " + t.tile_id + " has part " + std::to_string(t.part) + " outside 1..20");
        if (t.width <= 0 || t.height <= 0 || t.overlap_px < 0 || t.overlap_px >= std::min(t.width, t.height))
            throw DataError("tile " + t.tile_id + " has inconsistent size/overlap");
    }
    if (!(m.pixel_size_um > 0)) throw ConfigError("pixel size must be positive");
}

TileManifest read_manifest(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open tile manifest " + path.string());
    const auto base = path.parent_path();
    TileManifest m;
    if (path.extension() == ".json") {
        nlohmann::json j;
        try {
            in >> j;
            m.pixel_size_um = j.value("pixel_size_um", m.pixel_size_um);
            m.magnification = j.value("magnification", m.magnification);
            int index = 0;
            for (const auto& t : j.at("tiles")) {
                TileRecord r;
                r.tile_id = t.at("tile_id");
                r.image_path = t.at("image_path").get<std::string>();
                r.col = t.at("col");
                r.row = t.at("row");
                r.part = t.at("part");
                r.overlap_px = t.value("overlap_px", 0);
                r.width = t.value("width", r.width);
                r.height = t.value("height", r.height);
                r.image_id = t.value("image_id", index + 1);
                ++index;
                m.tiles.push_back(std::move(r));
            }
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("malformed manifest " + path.string() + ": " + e.what());
        }
    } else {
        std::string line;
        if (!std::getline(in, line)) throw FormatError("empty manifest " + path.string());
        if (!line.empty() && line.back() == '\r') line.pop_back();
        const auto header = split_csv(line);
        auto col_of = [&](const std::string& name) -> int {
            const auto it = std::find(header.begin(), header.end(), name);
            return it == header.end() ? -1 : static_cast<int>(it - header.begin());
        };
        for (const char* req : {"tile_id", "image_path", "col", "row", "part", "overlap_px"})
            if (col_of(req) < 0) throw FormatError(path.string() + ": missing column " + req);
        std::size_t lineno = 1;
        while (std::getline(in, line)) {
            ++lineno;
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (line.empty() || line[0] == '#') continue;
            const auto cells = split_csv(line);
            const std::string where = path.string() + ":" + std::to_string(lineno);
            if (cells.size() != header.size()) throw FormatError(where + ": expected " + std::to_string(header.size()) + " fields");
            TileRecord r;
            r.tile_id = cells[col_of("tile_id")];
            r.image_path = cells[col_of("image_path")];
            r.col = to_int(cells[col_of("col")], where);
            r.row = to_int(cells[col_of("row")], where);
            r.part = to_int(cells[col_of("part")], where);
            r.overlap_px = to_int(cells[col_of("overlap_px")], where);
            if (col_of("width") >= 0) r.width = to_int(cells[col_of("width")], where);
            if (col_of("height") >= 0) r.height = to_int(cells[col_of("height")], where);
            r.image_id = col_of("image_id") >= 0 ? to_int(cells[col_of("image_id")], where)
                                                 : static_cast<int>(m.tiles.size()) + 1;
            m.tiles.push_back(std::move(r));
        }
    }
    for (auto& t : m.tiles)
        if (t.image_path.is_relative()) t.image_path = base / t.image_path;
    validate(m);
    return m;
}

TileManifest manifest_from_coco(const coco::Dataset& d, double pixel_size_um)
{
    TileManifest m;
    m.pixel_size_um = pixel_size_um;
    int col = 0;
    for (const auto& im : d.images) {
        TileRecord r;
        r.tile_id = im.file_name.empty() ? "image_" + std::to_string(im.id) : im.file_name;
        r.image_path = im.file_name;
        r.col = col++;
        r.row = 0;
        r.part = 1;
        r.width = im.width;
        r.height = im.height;
        r.image_id = im.id;
        m.tiles.push_back(std::move(r));
    }
    return m;
}

void locate(Detection& d, const TileRecord& tile, double pixel_size_um)
{
    d.tile_id = tile.tile_id;
    d.image_id = tile.image_id;
    const Point o = tile.origin();
    d.wafer_x = o.x + d.x;
    d.wafer_y = o.y + d.y;
    if (d.area > 0) {
        d.radius_px = std::sqrt(d.area / std::numbers::pi);
        d.radius_um = d.radius_px * pixel_size_um;
    }
}

TileDetections detect_tile(const GrayImage& img, const dictionary::Dictionary& dict, const DetectorConfig& cfg,
                           const quality::QualityModel* gate)
{
    if (dict.entries.empty()) throw ConfigError("detection needs a non-empty dictionary");
    TileDetections out;
    const GrayImage corrected = imgproc::correct_contrast(img, cfg.contrast);
    const auto blobs = imgproc::segment_candidates(corrected, cfg.threshold, cfg.morph, cfg.min_area);

    std::vector<imgproc::Patch> patches;
    for (const auto& b : blobs) {
        const auto fit = imgproc::fit_ellipse(b);
        if (!imgproc::shape_gate(b, fit, cfg.gate).keep) {
            ++out.shape_rejected;
            continue;
        }
        // The gate looks at the uncorrected crop, as in the extract/gate stages.
        if (gate && quality::predict_quality(*gate, imgproc::extract_patch(img, b, cfg.border).image).label == 0) {
            ++out.quality_rejected;
            continue;
        }
        // Quantized like the patch PNGs the dictionary features were computed from.
        imgproc::Patch p = imgproc::extract_patch(corrected, b, cfg.border);
        p.image = quantize_u8(p.image);
        patches.push_back(std::move(p));
    }
    if (patches.empty()) return out;

    Matrix raw(patches.size(), features::kClassicalDim);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto f = features::classical_features(patches[i]);
        // Stored features are float32; round the same way so files and memory agree.
        for (std::size_t j = 0; j < f.values.size(); ++j) raw(i, j) = static_cast<float>(f.values[j]);
    }
    const auto cls = dict.classify(raw);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto& b = patches[i].blob;
        Detection d;
        d.type = cls[i].type;
        d.score = cls[i].score;
        d.bbox = b.bbox;
        d.mask = b.local_mask();
        d.area = static_cast<double>(b.area());
        d.x = b.cx;
        d.y = b.cy;
        d.source = Source::Builtin;
        out.detections.push_back(std::move(d));
    }
    return out;
}

IngestReport ingest_predictions(const nlohmann::json& results, const TileManifest& manifest)
{
    IngestReport rep;
    const nlohmann::json* list = &results;
    if (results.is_object()) {
        if (!results.contains("annotations")) throw FormatError("results JSON has no annotations list");
        list = &results["annotations"];
    }
    if (!list->is_array()) throw FormatError("results JSON must be a list of records");
    std::set<std::tuple<int, int, double, double, double, double>> seen;
    for (std::size_t idx = 0; idx < list->size(); ++idx) {
        const auto& rec = (*list)[idx];
        int image_id = 0, category = 0;
        std::array<double, 4> bbox{};
        try {
            image_id = rec.at("image_id");
            category = rec.at("category_id");
            bbox = rec.at("bbox").get<std::array<double, 4>>();
        } catch (const nlohmann::json::exception&) {
            rep.rejected.push_back({idx, "bad-record"});
            continue;
        }
        const TileRecord* tile = manifest.find_image(image_id);
        if (!tile) {
            rep.rejected.push_back({idx, "unknown-image"});
            continue;
        }
        const auto type = from_category_id(category);
        if (!type) {
            rep.rejected.push_back({idx, "unknown-category"});
            continue;
        }
        if (bbox[0] < 0 || bbox[1] < 0 || !(bbox[2] > 0) || !(bbox[3] > 0) || bbox[0] + bbox[2] > tile->width ||
            bbox[1] + bbox[3] > tile->height) {
            rep.rejected.push_back({idx, "out-of-bounds"});
            continue;
        }
        if (!seen.insert({image_id, category, bbox[0], bbox[1], bbox[2], bbox[3]}).second) {
            ++rep.duplicates;
            continue;
        }
        Detection d;
        d.type = *type;
        d.source = Source::External;
        d.score = rec.value("score", 1.0);
        const int x0 = static_cast<int>(std::floor(bbox[0])), y0 = static_cast<int>(std::floor(bbox[1]));
        const int x1 = std::max(x0, static_cast<int>(std::ceil(bbox[0] + bbox[2])) - 1);
        const int y1 = std::max(y0, static_cast<int>(std::ceil(bbox[1] + bbox[3])) - 1);
        d.bbox = {x0, y0, x1, y1};
        d.x = bbox[0] + bbox[2] / 2.0;
        d.y = bbox[1] + bbox[3] / 2.0;
        d.area = rec.value("area", bbox[2] * bbox[3]);
        if (rec.contains("segmentation") && rec["segmentation"].is_object()) {
            try {
                const BinaryMask full = coco::decode(coco::rle_from_json(rec["segmentation"]));
                if (full.width() != tile->width || full.height() != tile->height) {
                    rep.rejected.push_back({idx, "out-of-bounds"});
                    continue;
                }
                d.mask = crop(full, d.bbox);
                d.area = static_cast<double>(full.count());
            } catch (const std::exception&) {
                rep.rejected.push_back({idx, "bad-record"});
                continue;
            }
        }
        locate(d, *tile, manifest.pixel_size_um);
        rep.detections.push_back(std::move(d));
    }
    return rep;
}

nlohmann::json detections_to_json(const std::vector<Detection>& list)
{
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : list) {
        nlohmann::json j = {{"tile_id", d.tile_id},
                            {"image_id", d.image_id},
                            {"type", to_string(d.type)},
                            {"category_id", category_id(d.type)},
                            {"bbox", {d.bbox.x0, d.bbox.y0, d.bbox.width(), d.bbox.height()}},
                            {"area", d.area},
                            {"score", d.score},
                            {"source", d.source == Source::Builtin ? "builtin" : "external"},
                            {"x", d.x},
                            {"y", d.y},
                            {"wafer_x", d.wafer_x},
                            {"wafer_y", d.wafer_y},
                            {"radius_px", d.radius_px},
                            {"radius_um", d.radius_um}};
        if (!d.mask.empty()) j["mask"] = coco::to_json(coco::encode(d.mask, {0, 0}, d.mask.width(), d.mask.height()));
        out.push_back(std::move(j));
    }
    return out;
}

std::vector<Detection> detections_from_json(const nlohmann::json& arr)
{
    std::vector<Detection> out;
    try {
        for (const auto& j : arr) {
            Detection d;
            const auto t = parse_pit_type(j.at("type").get<std::string>());
            if (!t) throw FormatError("unknown detection type");
            d.type = *t;
            d.tile_id = j.at("tile_id");
            d.image_id = j.at("image_id");
            const auto b = j.at("bbox").get<std::array<int, 4>>();
            d.bbox = {b[0], b[1], b[0] + b[2] - 1, b[1] + b[3] - 1};
            d.area = j.at("area");
            d.score = j.at("score");
            d.source = j.at("source") == "builtin" ? Source::Builtin : Source::External;
            d.x = j.at("x");
            d.y = j.at("y");
            d.wafer_x = j.at("wafer_x");
            d.wafer_y = j.at("wafer_y");
            d.radius_px = j.at("radius_px");
            d.radius_um = j.at("radius_um");
            if (j.contains("mask")) d.mask = coco::decode(coco::rle_from_json(j["mask"]));
            out.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed detections: ") + e.what());
    }
    return out;
}

double rmse(std::span<const double> truth, std::span<const double> predicted)
{
    if (truth.size() != predicted.size())
        throw PreconditionError("rmse: " + std::to_string(truth.size()) + " truth values vs " +
                                std::to_string(predicted.size()) + " predictions");
    if (truth.empty()) throw PreconditionError("rmse needs at least one value");
    double s = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        const double d = truth[i] - predicted[i];
        s += d * d;
    }
    return std::sqrt(s / static_cast<double>(truth.size()));
}

CountTable count_annotations(const coco::Dataset& d)
{
    CountTable t;
    for (const auto& im : d.images) t[im.id] = {0, 0, 0};
    for (const auto& a : d.annotations)
        if (const auto type = from_category_id(a.category_id)) t[a.image_id][index_of(*type)] += 1;
    return t;
}

CountTable count_detections(const std::vector<Detection>& list)
{
    CountTable t;
    for (const auto& d : list) t[d.image_id][index_of(d.type)] += 1;
    return t;
}

RmseReport evaluate(const CountTable& truth, const CountTable& predicted, const std::string& dataset_id)
{
    RmseReport r;
    r.dataset_id = dataset_id;
    for (const auto& [id, counts] : predicted)
        if (!truth.count(id)) r.excluded.push_back(id);
    if (truth.empty()) throw DataError("evaluation needs ground-truth counts");
    std::array<std::vector<double>, 3> t, p;
    for (const auto& [id, counts] : truth) {
        ImageError e;
        e.image_id = id;
        e.truth = counts;
        if (auto it = predicted.find(id); it != predicted.end()) e.predicted = it->second;
        for (std::size_t k = 0; k < 3; ++k) {
            e.error[k] = e.predicted[k] - e.truth[k];
            t[k].push_back(e.truth[k]);
            p[k].push_back(e.predicted[k]);
        }
        r.images.push_back(e);
    }
    for (std::size_t k = 0; k < 3; ++k) r.rmse[k] = rmse(t[k], p[k]);
    return r;
}

nlohmann::json to_json(const RmseReport& r)
{
    nlohmann::json j;
    j["dataset"] = r.dataset_id;
    j["images"] = r.images.size();
    for (PitType t : kPitTypes) j["rmse"][to_string(t)] = r.rmse[index_of(t)];
    j["excluded_images"] = r.excluded;
    return j;
}

void write_errors_csv(const std::filesystem::path& path, const RmseReport& r)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "image_id,truth_BPD,truth_TED,truth_TSD,pred_BPD,pred_TED,pred_TSD,err_BPD,err_TED,err_TSD\n";
    for (const auto& e : r.images) {
        out << e.image_id;
        for (double v : e.truth) out << ',' << v;
        for (double v : e.predicted) out << ',' << v;
        for (double v : e.error) out << ',' << v;
        out << '\n';
    }
}

}  // namespace etchpit::analyze
