#include "etchpit/embed.hpp"

#include "etchpit/error.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace etchpit::embed {

Embedding reduce(const Matrix& x, const EmbeddingConfig& config)
{
    switch (config.method) {
    case Method::Umap: return reduce_umap(x, config);
    case Method::Pca: {
        Embedding e = reduce_pca(x, config.n_components);
        e.config = config;
        return e;
    }
    case Method::Tsne: return fit_tsne(x, config).embedding;
    }
    throw ConfigError("unknown embedding method");
}

Embedding scale_components(const Embedding& e)
{
    if (e.size() == 0) throw PreconditionError("cannot scale an empty embedding");
    Embedding out = e;
    for (std::size_t c = 0; c < e.coords.cols(); ++c) {
        double lo = e.coords(0, c), hi = lo;
        for (std::size_t i = 1; i < e.size(); ++i) {
            lo = std::min(lo, e.coords(i, c));
            hi = std::max(hi, e.coords(i, c));
        }
        if (hi > lo) {
            for (std::size_t i = 0; i < e.size(); ++i) out.coords(i, c) = (e.coords(i, c) - lo) / (hi - lo);
        } else {
            for (std::size_t i = 0; i < e.size(); ++i) out.coords(i, c) = 0.5;
            out.warnings.push_back("component " + std::to_string(c + 1) + " is constant; mapped to 0.5");
        }
    }
    return out;
}

void write_embedding_csv(const std::filesystem::path& path, const Embedding& e)
{
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << "patch_id";
    for (std::size_t c = 0; c < e.coords.cols(); ++c) out << ",c" << (c + 1);
    out << '\n';
    char buf[64];
    for (std::size_t i = 0; i < e.size(); ++i) {
        out << (i < e.ids.size() ? e.ids[i] : std::to_string(i));
        for (std::size_t c = 0; c < e.coords.cols(); ++c) {
            std::snprintf(buf, sizeof buf, "%.17g", e.coords(i, c));
            out << ',' << buf;
        }
        out << '\n';
    }
}

Embedding read_embedding_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open " + path.string());
    std::string line;
    if (!std::getline(in, line) || line.rfind("patch_id", 0) != 0)
        throw FormatError(path.string() + ": missing patch_id header");
    const std::size_t dim = static_cast<std::size_t>(std::count(line.begin(), line.end(), ','));
    std::vector<std::string> ids;
    std::vector<double> vals;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        std::getline(ss, cell, ',');
        ids.push_back(cell);
        std::size_t got = 0;
        while (std::getline(ss, cell, ',')) {
            try {
                vals.push_back(std::stod(cell));
            } catch (const std::exception&) {
                throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
            }
            ++got;
        }
        if (got != dim)
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " + std::to_string(dim) +
                              " components, found " + std::to_string(got));
    }
    Embedding e;
    e.ids = std::move(ids);
    e.coords = Matrix(e.ids.size(), dim);
    e.coords.data() = std::move(vals);
    e.source_index.resize(e.ids.size());
    for (std::size_t i = 0; i < e.ids.size(); ++i) e.source_index[i] = i;
    e.config.n_components = static_cast<int>(dim);
    return e;
}

}  // namespace etchpit::embed
