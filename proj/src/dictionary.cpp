#include "etchpit/dictionary.hpp"

#include "etchpit/error.hpp"
#include "etchpit/image_io.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace etchpit::dictionary {

std::vector<const Entry*> Dictionary::of_type(PitType t) const
{
    std::vector<const Entry*> out;
    for (const auto& e : entries)
        if (e.type == t) out.push_back(&e);
    return out;
}

void Dictionary::compute_centroids()
{
    const std::size_t dim = coords.cols();
    std::array<std::vector<double>, 3> sum;
    std::array<std::size_t, 3> count{};
    for (auto& s : sum) s.assign(dim, 0.0);
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto t = index_of(entries[i].type);
        for (std::size_t c = 0; c < dim; ++c) sum[t][c] += coords(i, c);
        ++count[t];
    }
    for (std::size_t t = 0; t < 3; ++t) {
        if (count[t] == 0) {
            centroids[t].reset();
            continue;
        }
        for (double& v : sum[t]) v /= static_cast<double>(count[t]);
        centroids[t] = sum[t];
    }
}

std::vector<Classification> Dictionary::classify(const Matrix& raw) const
{
    if (entries.empty()) throw ConfigError("dictionary is empty");
    const Matrix x = normalizer.apply(raw);
    const Matrix ref = normalizer.apply(reference.values);
    const Matrix y = embed::umap_transform(ref, coords, x, embed_config.n_neighbors);
    std::vector<Classification> out(raw.rows());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
        double best = INFINITY;
        for (PitType t : kPitTypes) {
            const auto& c = centroids[index_of(t)];
            if (!c) continue;
            const double d = std::sqrt(squared_distance(y.row(i), *c));
            if (d < best) {
                best = d;
                out[i].type = t;
            }
        }
        out[i].distance = best;
        out[i].score = 1.0 / (1.0 + best);
        out[i].coords.assign(y.row(i).begin(), y.row(i).end());
    }
    return out;
}

void save(const std::filesystem::path& dir, const Dictionary& dict)
{
    if (dict.reference.size() != dict.entries.size() || dict.coords.rows() != dict.entries.size())
        throw PreconditionError("dictionary reference does not match its entries");
    std::filesystem::create_directories(dir);
    nlohmann::json j;
    j["version"] = 1;
    j["embedding"] = {{"method", embed::to_string(dict.embed_config.method)},
                      {"n_components", dict.embed_config.n_components},
                      {"n_neighbors", dict.embed_config.n_neighbors},
                      {"min_dist", dict.embed_config.min_dist},
                      {"seed", dict.embed_config.seed}};
    j["normalizer"] = {{"lo", dict.normalizer.lo}, {"hi", dict.normalizer.hi}};
    nlohmann::json entries = nlohmann::json::array();
    for (const auto& e : dict.entries) {
        const std::string t = to_string(e.type);
        io::write_gray_png(dir / t / (e.id + ".png"), e.image);
        io::write_mask_png(dir / t / (e.id + "_mask.png"), e.mask);
        entries.push_back({{"id", e.id},
                           {"type", t},
                           {"source", e.source},
                           {"origin", {e.origin.x, e.origin.y}},
                           {"area", e.area},
                           {"lengthiness", e.descriptors.lengthiness},
                           {"compactness", e.descriptors.compactness},
                           {"circularity", e.descriptors.circularity},
                           {"image", t + "/" + e.id + ".png"},
                           {"mask", t + "/" + e.id + "_mask.png"}});
    }
    j["entries"] = std::move(entries);
    for (PitType t : kPitTypes) std::filesystem::create_directories(dir / to_string(t));
    std::ofstream out(dir / "manifest.json");
    if (!out) throw DataError("cannot write " + (dir / "manifest.json").string());
    out << j.dump(1) << '\n';

    features::FeatureSet ref = dict.reference;
    ref.ids.clear();
    for (const auto& e : dict.entries) ref.ids.push_back(e.id);
    features::write_fvec(dir / "reference.fvec", ref);
    embed::Embedding emb;
    emb.coords = dict.coords;
    emb.ids = ref.ids;
    embed::write_embedding_csv(dir / "reference_embedding.csv", emb);
}

Dictionary load(const std::filesystem::path& dir)
{
    const auto manifest = dir / "manifest.json";
    std::ifstream in(manifest);
    if (!in) throw ConfigError("no dictionary at " + dir.string() + " (run `dict` first)");
    Dictionary d;
    try {
        nlohmann::json j;
        in >> j;
        const auto& em = j.at("embedding");
        d.embed_config.method = embed::parse_method(em.at("method"));
        d.embed_config.n_components = em.at("n_components");
        d.embed_config.n_neighbors = em.at("n_neighbors");
        d.embed_config.min_dist = em.at("min_dist");
        d.embed_config.seed = em.at("seed");
        d.normalizer.lo = j.at("normalizer").at("lo").get<std::vector<double>>();
        d.normalizer.hi = j.at("normalizer").at("hi").get<std::vector<double>>();
        for (const auto& e : j.at("entries")) {
            Entry x;
            x.id = e.at("id");
            const auto t = parse_pit_type(e.at("type").get<std::string>());
            if (!t) throw FormatError("unknown type in " + manifest.string());
            x.type = *t;
            x.source = e.at("source");
            x.origin = {e.at("origin")[0], e.at("origin")[1]};
            x.area = e.at("area");
            x.descriptors = {e.at("lengthiness"), e.at("compactness"), e.at("circularity")};
            x.image = io::read_gray(dir / e.at("image").get<std::string>());
            x.mask = io::read_mask(dir / e.at("mask").get<std::string>());
            d.entries.push_back(std::move(x));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed " + manifest.string() + ": " + e.what());
    }
    d.reference = features::read_fvec(dir / "reference.fvec");
    d.reference.source = features::FeatureSource::Classical;
    const embed::Embedding emb = embed::read_embedding_csv(dir / "reference_embedding.csv");
    d.coords = emb.coords;
    if (d.reference.size() != d.entries.size() || d.coords.rows() != d.entries.size())
        throw FormatError("dictionary at " + dir.string() + " has inconsistent reference files");
    d.compute_centroids();
    return d;
}

}  // namespace etchpit::dictionary
