#include "etchpit/coco.hpp"

#include "etchpit/error.hpp"
#include "etchpit/types.hpp"

#include <fstream>

namespace etchpit::coco {

Rle encode(const BinaryMask& local, Point origin, int width, int height)
{
    Rle r;
    r.width = width;
    r.height = height;
    bool cur = false;
    std::uint32_t run = 0;
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) {
            const bool v = local.get_or(x - origin.x, y - origin.y, false);
            if (v != cur) {
                r.counts.push_back(run);
                run = 0;
                cur = v;
            }
            ++run;
        }
    }
    r.counts.push_back(run);
    return r;
}

BinaryMask decode(const Rle& rle)
{
    BinaryMask m(rle.width, rle.height);
    std::size_t pos = 0;
    const std::size_t total = static_cast<std::size_t>(rle.width) * rle.height;
    bool v = false;
    for (std::uint32_t c : rle.counts) {
        if (pos + c > total) throw FormatError("RLE runs exceed the image size");
        if (v)
            for (std::size_t p = pos; p < pos + c; ++p)
                m.set(static_cast<int>(p / rle.height), static_cast<int>(p % rle.height), true);
        pos += c;
        v = !v;
    }
    if (pos != total) throw FormatError("RLE runs do not cover the image");
    return m;
}

// Runs after the second are stored as differences to the run two back,
// then written 5 bits per character with a continuation bit, offset by 48.
std::string counts_to_string(const std::vector<std::uint32_t>& counts)
{
    std::string s;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        long long x = counts[i];
        if (i > 2) x -= counts[i - 2];
        bool more = true;
        while (more) {
            char c = static_cast<char>(x & 0x1f);
            x >>= 5;
            more = (c & 0x10) ? x != -1 : x != 0;
            if (more) c |= 0x20;
            s.push_back(static_cast<char>(c + 48));
        }
    }
    return s;
}

std::vector<std::uint32_t> counts_from_string(const std::string& s)
{
    std::vector<long long> cnts;
    std::size_t p = 0;
    while (p < s.size()) {
        long long x = 0;
        int k = 0;
        bool more = true;
        while (more) {
            if (p >= s.size()) throw FormatError("truncated compressed RLE");
            const long long c = static_cast<long long>(s[p]) - 48;
            x |= (c & 0x1f) << (5 * k);
            more = (c & 0x20) != 0;
            ++p;
            ++k;
            if (!more && (c & 0x10)) x |= -1LL << (5 * k);
        }
        if (cnts.size() > 2) x += cnts[cnts.size() - 2];
        cnts.push_back(x);
    }
    std::vector<std::uint32_t> out;
    for (long long v : cnts) {
        if (v < 0) throw FormatError("negative run in compressed RLE");
        out.push_back(static_cast<std::uint32_t>(v));
    }
    return out;
}

nlohmann::json to_json(const Rle& rle) { return {{"size", {rle.height, rle.width}}, {"counts", rle.counts}}; }

Rle rle_from_json(const nlohmann::json& j)
{
    Rle r;
    r.height = j.at("size")[0];
    r.width = j.at("size")[1];
    const auto& c = j.at("counts");
    if (c.is_string()) r.counts = counts_from_string(c.get<std::string>());
    else r.counts = c.get<std::vector<std::uint32_t>>();
    return r;
}

nlohmann::json categories_json()
{
    nlohmann::json cats = nlohmann::json::array();
    for (PitType t : kPitTypes) cats.push_back({{"id", category_id(t)}, {"name", to_string(t)}, {"supercategory", "etch_pit"}});
    return cats;
}

nlohmann::json to_json(const Dataset& d)
{
    nlohmann::json j;
    j["info"] = {{"description", "synthetic etch-pit scenes"}, {"version", "1"}};
    j["categories"] = categories_json();
    j["images"] = nlohmann::json::array();
    for (const auto& im : d.images)
        j["images"].push_back({{"id", im.id}, {"file_name", im.file_name}, {"width", im.width}, {"height", im.height}});
    j["annotations"] = nlohmann::json::array();
    for (const auto& a : d.annotations) {
        nlohmann::json x = {{"id", a.id},         {"image_id", a.image_id}, {"category_id", a.category_id},
                            {"bbox", a.bbox},     {"area", a.area},         {"iscrowd", a.iscrowd}};
        if (a.segmentation) x["segmentation"] = to_json(*a.segmentation);
        if (a.score) x["score"] = *a.score;
        j["annotations"].push_back(std::move(x));
    }
    return j;
}

namespace {

Annotation annotation_from_json(const nlohmann::json& x)
{
    Annotation a;
    a.id = x.value("id", 0);
    a.image_id = x.at("image_id");
    a.category_id = x.at("category_id");
    a.bbox = x.at("bbox").get<std::array<double, 4>>();
    a.area = x.value("area", a.bbox[2] * a.bbox[3]);
    a.iscrowd = x.value("iscrowd", 0);
    if (x.contains("segmentation") && x["segmentation"].is_object()) a.segmentation = rle_from_json(x["segmentation"]);
    if (x.contains("score")) a.score = x["score"].get<double>();
    return a;
}

}  // namespace

Dataset dataset_from_json(const nlohmann::json& j)
{
    Dataset d;
    try {
        if (j.is_array()) {
            // A bare results list.
            for (const auto& x : j) d.annotations.push_back(annotation_from_json(x));
            return d;
        }
        if (j.contains("images"))
            for (const auto& x : j.at("images"))
                d.images.push_back({x.at("id"), x.value("file_name", ""), x.value("width", 0), x.value("height", 0)});
        for (const auto& x : j.at("annotations")) d.annotations.push_back(annotation_from_json(x));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed annotation JSON: ") + e.what());
    }
    return d;
}

void write_dataset(const std::filesystem::path& path, const Dataset& d)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << to_json(d).dump() << '\n';
    if (!out) throw DataError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
    return dataset_from_json(j);
}

}  // namespace etchpit::coco
