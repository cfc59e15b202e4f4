#include "etchpit/pipeline.hpp"

#include "etchpit/analyze.hpp"
#include "etchpit/cluster.hpp"
#include "etchpit/coco.hpp"
#include "etchpit/dictionary.hpp"
#include "etchpit/embed.hpp"
#include "etchpit/features.hpp"
#include "etchpit/image_io.hpp"
#include "etchpit/imgproc.hpp"
#include "etchpit/kernels.hpp"
#include "etchpit/pitgen.hpp"
#include "etchpit/quality.hpp"
#include "etchpit/synth.hpp"

#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

namespace etchpit::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

MissingArtifact::MissingArtifact(const fs::path& path, std::string_view producer)
    : DataError("missing " + path.string() + "; run `etchpit " + std::string(producer) + "` first"),
      producer_(producer)
{
}

fs::path stage_dir(const config::PipelineConfig& cfg, std::string_view stage) { return cfg.io.work_dir / stage; }

int exit_code(const std::exception& e)
{
    if (dynamic_cast<const ConfigError*>(&e)) return 2;
    if (dynamic_cast<const DataError*>(&e)) return 3;
    if (dynamic_cast<const json::exception*>(&e)) return 3;
    return 1;
}

namespace {

std::string num(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

json read_json(const fs::path& path, std::string_view producer)
{
    if (!fs::exists(path)) throw MissingArtifact(path, producer);
    std::ifstream in(path);
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw FormatError(path.string() + " is not valid JSON");
    return j;
}

const fs::path& need(const fs::path& path, std::string_view producer)
{
    if (!fs::exists(path)) throw MissingArtifact(path, producer);
    return path;
}

/// Minimal CSV: comma separated, no quoting (ids never contain commas).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    fs::path path;

    std::size_t col(const std::string& name) const
    {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw FormatError(path.string() + " has no column '" + name + "'");
    }
    std::size_t size() const { return rows.size(); }
};

std::vector<std::string> split(const std::string& line)
{
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

Table read_table(const fs::path& path, std::string_view producer)
{
    need(path, producer);
    std::ifstream in(path);
    Table t;
    t.path = path;
    std::string line;
    if (!std::getline(in, line)) throw FormatError(path.string() + " is empty");
    t.header = split(line);
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto cells = split(line);
        if (cells.size() != t.header.size())
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                              std::to_string(t.header.size()) + " fields");
        t.rows.push_back(std::move(cells));
    }
    return t;
}

double to_double(const std::string& s, const fs::path& where)
{
    try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw FormatError(where.string() + ": bad number '" + s + "'");
    }
}

int to_int(const std::string& s, const fs::path& where)
{
    const double v = to_double(s, where);
    if (v != static_cast<int>(v)) throw FormatError(where.string() + ": bad integer '" + s + "'");
    return static_cast<int>(v);
}

/// Runs fn(i) for i in [0,n) on the OpenMP team; the first exception (by index) is rethrown.
template <class F>
void parallel_for(std::size_t n, F fn)
{
    std::vector<std::exception_ptr> errors(n);
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
            errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
    }
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

struct Context {
    const config::PipelineConfig& cfg;
    fs::path dir;
    StageResult result;
    std::ostream* log = nullptr;

    fs::path input(std::string_view stage, const fs::path& file) const { return stage_dir(cfg, stage) / file; }
    fs::path output(const fs::path& file)
    {
        result.artifacts.push_back(file);
        return dir / file;
    }
    void warn(const std::string& w)
    {
        result.warnings.push_back(w);
        if (log) *log << "warning: " << w << '\n';
    }
    void note(const std::string& s)
    {
        if (log) *log << s << '\n';
    }
};

// ---- extract ------------------------------------------------------------------

std::string patch_id(const std::string& tile, std::size_t k)
{
    char buf[16];
    std::snprintf(buf, sizeof buf, "_%04zu", k);
    return tile + buf;
}

analyze::TileManifest tile_manifest(const config::PipelineConfig& cfg)
{
    if (cfg.io.manifest.empty()) throw ConfigError("config key 'io.manifest' is not set");
    if (!fs::exists(cfg.io.manifest)) throw DataError("tile manifest " + cfg.io.manifest.string() + " not found");
    auto m = analyze::read_manifest(cfg.io.manifest);
    m.pixel_size_um = cfg.analyze.pixel_size_um;
    return m;
}

void run_extract(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto manifest = tile_manifest(cfg);
    const auto morph = imgproc::parse_morph_plan(cfg.imgproc.morph);
    fs::create_directories(ctx.dir / "patches");

    struct TileOut {
        std::vector<std::string> kept;        // patches.csv rows
        std::vector<std::string> candidates;  // candidates.jsonl records
        std::map<std::string, int> reasons;
    };
    std::vector<TileOut> outs(manifest.tiles.size());

    parallel_for(manifest.tiles.size(), [&](std::size_t t) {
        const auto& tile = manifest.tiles[t];
        const GrayImage img = io::read_gray(tile.image_path);
        if (img.width() != tile.width || img.height() != tile.height)
            throw DataError("tile " + tile.tile_id + " is " + std::to_string(img.width()) + "x" +
                            std::to_string(img.height()) + ", manifest says " + std::to_string(tile.width) + "x" +
                            std::to_string(tile.height));
        const GrayImage corrected = imgproc::correct_contrast(img, cfg.imgproc.contrast);
        const auto blobs = imgproc::segment_candidates(corrected, cfg.imgproc.threshold, morph,
                                                       static_cast<std::size_t>(cfg.imgproc.min_area));
        TileOut& out = outs[t];
        for (std::size_t k = 0; k < blobs.size(); ++k) {
            const auto& b = blobs[k];
            const std::string id = patch_id(tile.tile_id, k);
            const auto fit = imgproc::fit_ellipse(b);
            const auto v = imgproc::shape_gate(b, fit, cfg.imgproc.gate);
            const auto& d = v.descriptors;
            const std::string shape = num(static_cast<double>(b.area())) + ',' + num(d.lengthiness) + ',' +
                                      num(d.compactness) + ',' + num(d.circularity);
            const json rec = {{"patch_id", id},
                              {"tile_id", tile.tile_id},
                              {"bbox", {b.bbox.x0, b.bbox.y0, b.bbox.x1, b.bbox.y1}},
                              {"centroid", {b.cx, b.cy}},
                              {"area", b.area()},
                              {"lengthiness", d.lengthiness},
                              {"compactness", d.compactness},
                              {"circularity", d.circularity},
                              {"verdict", v.verdict_string()}};
            out.candidates.push_back(rec.dump());
            out.reasons[v.verdict_string()]++;
            if (!v.keep) continue;
            const auto p = imgproc::extract_patch(corrected, b, cfg.imgproc.border);
            const auto raw = imgproc::extract_patch(img, b, cfg.imgproc.border);
            io::write_gray_png(ctx.dir / "patches" / (id + ".png"), p.image);
            io::write_gray_png(ctx.dir / "patches" / (id + "_raw.png"), raw.image);
            io::write_mask_png(ctx.dir / "patches" / (id + "_mask.png"), p.mask);
            const auto& r = p.region;
            out.kept.push_back(id + ',' + tile.tile_id + ',' + std::to_string(r.x0) + ',' + std::to_string(r.y0) + ',' +
                               std::to_string(r.x1) + ',' + std::to_string(r.y1) + ',' + num(b.cx) + ',' + num(b.cy) +
                               ',' + shape + ',' + (p.clipped ? "1" : "0"));
        }
    });

    std::ofstream kept(ctx.output("patches.csv"));
    std::ofstream cand(ctx.output("candidates.jsonl"));
    kept << "patch_id,tile_id,x0,y0,x1,y1,cx,cy,area,lengthiness,compactness,circularity,clipped\n";
    std::size_t n_kept = 0, n_cand = 0;
    std::map<std::string, int> reasons;
    for (const auto& o : outs) {
        for (const auto& row : o.kept) kept << row << '\n';
        for (const auto& row : o.candidates) cand << row << '\n';
        n_kept += o.kept.size();
        n_cand += o.candidates.size();
        for (const auto& [k, v] : o.reasons) reasons[k] += v;
    }
    ctx.result.artifacts.push_back("patches/");
    ctx.result.summary = {{"tiles", manifest.tiles.size()}, {"candidates", n_cand}, {"kept", n_kept},
                          {"verdicts", reasons}};
    ctx.note("extract: " + std::to_string(n_kept) + " of " + std::to_string(n_cand) + " candidates kept from " +
             std::to_string(manifest.tiles.size()) + " tiles");
    if (n_kept == 0) ctx.warn("no candidate passed the shape gate");
}

struct PatchRow {
    std::string id;
    std::string tile_id;
    Rect region;
    double cx = 0.0, cy = 0.0;
    double area = 0.0;
    imgproc::ShapeDescriptors descriptors;
    bool clipped = false;
};

std::vector<PatchRow> read_patch_rows(const config::PipelineConfig& cfg)
{
    const Table t = read_table(stage_dir(cfg, "extract") / "patches.csv", "extract");
    const std::size_t c_id = t.col("patch_id"), c_tile = t.col("tile_id"), c_x0 = t.col("x0"), c_y0 = t.col("y0"),
                      c_x1 = t.col("x1"), c_y1 = t.col("y1"), c_cx = t.col("cx"), c_cy = t.col("cy"),
                      c_area = t.col("area"), c_len = t.col("lengthiness"), c_comp = t.col("compactness"),
                      c_circ = t.col("circularity"), c_clip = t.col("clipped");
    std::vector<PatchRow> out;
    for (const auto& r : t.rows) {
        PatchRow p;
        p.id = r[c_id];
        p.tile_id = r[c_tile];
        p.region = {to_int(r[c_x0], t.path), to_int(r[c_y0], t.path), to_int(r[c_x1], t.path), to_int(r[c_y1], t.path)};
        p.cx = to_double(r[c_cx], t.path);
        p.cy = to_double(r[c_cy], t.path);
        p.area = to_double(r[c_area], t.path);
        p.descriptors = {to_double(r[c_len], t.path), to_double(r[c_comp], t.path), to_double(r[c_circ], t.path)};
        p.clipped = r[c_clip] == "1";
        out.push_back(std::move(p));
    }
    return out;
}

imgproc::Patch load_patch(const config::PipelineConfig& cfg, const PatchRow& row)
{
    const fs::path dir = stage_dir(cfg, "extract") / "patches";
    imgproc::Patch p;
    p.image = io::read_gray(need(dir / (row.id + ".png"), "extract"));
    p.mask = io::read_mask(need(dir / (row.id + "_mask.png"), "extract"));
    if (p.image.width() != row.region.width() || p.image.height() != row.region.height() ||
        p.mask.width() != p.image.width() || p.mask.height() != p.image.height())
        throw DataError("patch " + row.id + " does not match its recorded region");
    std::vector<Point> px;
    for (int y = 0; y < p.mask.height(); ++y)
        for (int x = 0; x < p.mask.width(); ++x)
            if (p.mask.get(x, y)) px.push_back({x + row.region.x0, y + row.region.y0});
    if (px.empty()) throw DataError("patch " + row.id + " has an empty mask");
    p.blob = imgproc::make_blob(std::move(px));
    p.region = row.region;
    p.border = cfg.imgproc.border;
    p.clipped = row.clipped;
    return p;
}

// ---- gate ---------------------------------------------------------------------

quality::QualityModel train_synthetic_gate(const config::PipelineConfig& cfg)
{
    quality::LabeledPatchSet data;
    for (auto& s : pitgen::single_vs_double(cfg.quality.train_per_class, cfg.seed)) data.add(std::move(s.image), s.label);
    if (cfg.quality.augment) data = quality::augment(data, cfg.seed);
    quality::TrainParams tp = cfg.quality.train;
    tp.seed = cfg.seed;
    auto model = quality::train_quality(data, tp);
    if (cfg.quality.augment) model.augmentation = "rotations+noise";
    return model;
}

void run_gate(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto rows = read_patch_rows(cfg);
    std::unique_ptr<quality::QualityModel> model;
    std::unique_ptr<quality::ScoreTable> scores;
    const std::string& mode = cfg.quality.mode;
    if (mode == "synthetic") {
        model = std::make_unique<quality::QualityModel>(train_synthetic_gate(cfg));
        quality::save_model(ctx.output("model.json"), *model);
    } else if (mode == "model") {
        if (!fs::exists(cfg.quality.model)) throw ConfigError("quality model " + cfg.quality.model.string() + " not found");
        model = std::make_unique<quality::QualityModel>(quality::load_model(cfg.quality.model));
    } else if (mode == "scores") {
        if (!fs::exists(cfg.quality.scores)) throw ConfigError("score file " + cfg.quality.scores.string() + " not found");
        scores = std::make_unique<quality::ScoreTable>(quality::read_scores_csv(cfg.quality.scores));
        for (const auto& r : rows)
            if (!scores->count(r.id)) throw DataError("score file has no entry for patch " + r.id);
    }

    std::vector<quality::QualityPrediction> preds(rows.size(), {1, 1.0});
    if (model || scores) {
        const fs::path dir = stage_dir(cfg, "extract") / "patches";
        parallel_for(rows.size(), [&](std::size_t i) {
            const GrayImage raw = io::read_gray(need(dir / (rows[i].id + "_raw.png"), "extract"));
            preds[i] = quality::gate_patch(model.get(), scores.get(), rows[i].id, raw);
        });
    } else {
        ctx.warn("quality.mode is none: every patch accepted");
    }

    std::ofstream out(ctx.output("gate.csv"));
    out << "patch_id,probability,label\n";
    std::size_t accepted = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
        out << rows[i].id << ',' << num(preds[i].probability) << ',' << preds[i].label << '\n';
        accepted += static_cast<std::size_t>(preds[i].label);
    }
    ctx.result.summary = {{"mode", mode}, {"patches", rows.size()}, {"accepted", accepted}};
    if (model) ctx.result.summary["train_loss"] = model->final_loss;
    ctx.note("gate: " + std::to_string(accepted) + " of " + std::to_string(rows.size()) + " patches accepted");
}

// ---- features -----------------------------------------------------------------

std::vector<PatchRow> accepted_rows(const config::PipelineConfig& cfg)
{
    const auto rows = read_patch_rows(cfg);
    const Table g = read_table(stage_dir(cfg, "gate") / "gate.csv", "gate");
    const std::size_t c_id = g.col("patch_id"), c_label = g.col("label");
    std::map<std::string, bool> ok;
    for (const auto& r : g.rows) ok[r[c_id]] = r[c_label] == "1";
    std::vector<PatchRow> out;
    for (const auto& r : rows) {
        auto it = ok.find(r.id);
        if (it == ok.end()) throw DataError("gate.csv has no verdict for patch " + r.id + "; re-run `etchpit gate`");
        if (it->second) out.push_back(r);
    }
    return out;
}

void run_features(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto rows = accepted_rows(cfg);
    if (rows.empty()) throw DataError("no patch passed the quality gate");

    features::FeatureSet set;
    set.ids.reserve(rows.size());
    for (const auto& r : rows) set.ids.push_back(r.id);
    set.flags.assign(rows.size(), "");
    if (cfg.features.source == "external") {
        if (!fs::exists(cfg.features.external))
            throw ConfigError("external feature file " + cfg.features.external.string() + " not found");
        const auto ext = features::read_fvec(cfg.features.external);
        std::map<std::string, std::size_t> index;
        for (std::size_t i = 0; i < ext.ids.size(); ++i) index.emplace(ext.ids[i], i);
        set.source = features::FeatureSource::External;
        set.values = Matrix(rows.size(), ext.dim());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            auto it = index.find(rows[i].id);
            if (it == index.end()) throw DataError("external features have no row for patch " + rows[i].id);
            for (std::size_t j = 0; j < ext.dim(); ++j) set.values(i, j) = ext.values(it->second, j);
        }
    } else {
        set.values = Matrix(rows.size(), features::kClassicalDim);
        parallel_for(rows.size(), [&](std::size_t i) {
            const auto f = features::classical_features(load_patch(cfg, rows[i]));
            for (std::size_t j = 0; j < f.values.size(); ++j) set.values(i, j) = static_cast<float>(f.values[j]);
            if (f.empty_mask) set.flags[i] = "empty-mask";
        });
    }
    for (std::size_t i = 0; i < rows.size(); ++i)
        if (!set.flags[i].empty()) ctx.warn("patch " + rows[i].id + ": " + set.flags[i]);

    features::write_fvec(ctx.output("features.fvec"), set);
    std::ofstream shapes(ctx.output("shapes.csv"));
    shapes << "patch_id,lengthiness,area\n";
    for (const auto& r : rows) shapes << r.id << ',' << num(r.descriptors.lengthiness) << ',' << num(r.area) << '\n';
    ctx.result.summary = {{"patches", rows.size()}, {"dim", set.dim()}, {"source", cfg.features.source}};
    ctx.note("features: " + std::to_string(rows.size()) + " x " + std::to_string(set.dim()));
}

// ---- embed --------------------------------------------------------------------

features::FeatureSet read_features(const config::PipelineConfig& cfg)
{
    return features::read_fvec(need(stage_dir(cfg, "features") / "features.fvec", "features"));
}

void run_embed(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto set = read_features(cfg);
    if (set.size() < 3) throw DataError("embedding needs at least 3 patches, got " + std::to_string(set.size()));
    const auto normalizer = features::MinMaxNormalizer::fit(set.values);
    auto e = embed::scale_components(embed::reduce(normalizer.apply(set.values), cfg.embed));
    e.ids = set.ids;
    for (const auto& w : e.warnings) ctx.warn(w);
    embed::write_embedding_csv(ctx.output("embedding.csv"), e);
    ctx.result.summary = {{"points", e.size()},
                          {"method", embed::to_string(cfg.embed.method)},
                          {"components", cfg.embed.n_components}};
    ctx.note("embed: " + std::to_string(e.size()) + " points, " + embed::to_string(cfg.embed.method));
}

// ---- cluster ------------------------------------------------------------------

embed::Embedding read_embedding(const config::PipelineConfig& cfg)
{
    return embed::read_embedding_csv(need(stage_dir(cfg, "embed") / "embedding.csv", "embed"));
}

void run_cluster(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto e = read_embedding(cfg);
    const Table st = read_table(stage_dir(cfg, "features") / "shapes.csv", "features");
    std::map<std::string, cluster::PatchShape> by_id;
    const std::size_t c_id = st.col("patch_id"), c_len = st.col("lengthiness"), c_area = st.col("area");
    for (const auto& r : st.rows) by_id[r[c_id]] = {to_double(r[c_len], st.path), to_double(r[c_area], st.path)};
    std::vector<cluster::PatchShape> shapes;
    for (const auto& id : e.ids) {
        auto it = by_id.find(id);
        if (it == by_id.end()) throw DataError("shapes.csv has no row for patch " + id + "; re-run `etchpit features`");
        shapes.push_back(it->second);
    }

    const auto params = cfg.cluster_params(e.size());
    if (e.size() < 2 * static_cast<std::size_t>(params.min_cluster_size))
        throw DataError("clustering needs at least " + std::to_string(2 * params.min_cluster_size) + " patches, got " +
                        std::to_string(e.size()));
    const auto labels = cluster::hdbscan(e.coords, params);
    const auto types = cluster::assign_types(labels, shapes);
    for (const auto& w : labels.warnings) ctx.warn(w);
    for (const auto& w : types.warnings) ctx.warn(w);

    std::ofstream out(ctx.output("labels.csv"));
    out << "patch_id,cluster,strength,assigned_type\n";
    std::size_t noise = 0;
    for (std::size_t i = 0; i < e.size(); ++i) {
        const int c = labels.labels[i];
        noise += c < 0 ? 1 : 0;
        const auto t = c >= 0 ? types.type_of(c) : std::nullopt;
        out << e.ids[i] << ',' << c << ',' << num(labels.strength[i]) << ',' << (t ? to_string(*t) : "-") << '\n';
    }
    json clusters = json::array();
    for (const auto& ev : types.clusters)
        clusters.push_back({{"cluster", ev.cluster},
                            {"population", ev.population},
                            {"mean_lengthiness", ev.mean_lengthiness},
                            {"mean_area", ev.mean_area},
                            {"type", ev.type ? to_string(*ev.type) : "-"}});
    json unassigned = json::array();
    for (PitType t : types.unassigned) unassigned.push_back(to_string(t));
    ctx.result.summary = {{"points", e.size()},
                          {"n_clusters", labels.n_clusters},
                          {"noise", noise},
                          {"min_cluster_size", params.min_cluster_size},
                          {"min_samples", params.min_samples},
                          {"clusters", clusters},
                          {"unassigned_types", unassigned}};
    ctx.note("cluster: " + std::to_string(labels.n_clusters) + " clusters, " + std::to_string(noise) + " noise");
}

// ---- dict ---------------------------------------------------------------------

dictionary::Dictionary read_dictionary(const config::PipelineConfig& cfg)
{
    const fs::path dir = stage_dir(cfg, "dict");
    need(dir / "manifest.json", "dict");
    return dictionary::load(dir);
}

void run_dict(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto rows = read_patch_rows(cfg);
    const auto set = read_features(cfg);
    const auto e = read_embedding(cfg);
    const Table lt = read_table(stage_dir(cfg, "cluster") / "labels.csv", "cluster");
    if (e.ids != set.ids) throw DataError("embedding and features disagree on patch ids; re-run `etchpit embed`");

    std::map<std::string, const PatchRow*> row_of;
    for (const auto& r : rows) row_of[r.id] = &r;
    std::map<std::string, std::size_t> feature_row;
    for (std::size_t i = 0; i < set.ids.size(); ++i) feature_row[set.ids[i]] = i;

    dictionary::Dictionary dict;
    dict.embed_config = cfg.embed;
    dict.normalizer = features::MinMaxNormalizer::fit(set.values);
    std::vector<std::size_t> picked;
    const std::size_t c_id = lt.col("patch_id"), c_type = lt.col("assigned_type");
    for (const auto& r : lt.rows) {
        const auto t = parse_pit_type(r[c_type]);
        if (!t) continue;
        auto pr = row_of.find(r[c_id]);
        auto fr = feature_row.find(r[c_id]);
        if (pr == row_of.end() || fr == feature_row.end())
            throw DataError("labels.csv lists unknown patch " + r[c_id] + "; re-run `etchpit cluster`");
        const auto patch = load_patch(cfg, *pr->second);
        dictionary::Entry en;
        en.id = pr->second->id;
        en.type = *t;
        en.source = pr->second->tile_id;
        en.origin = patch.origin();
        en.image = patch.image;
        en.mask = patch.mask;
        en.descriptors = pr->second->descriptors;
        en.area = pr->second->area;
        dict.entries.push_back(std::move(en));
        picked.push_back(fr->second);
    }
    if (picked.empty()) throw DataError("no cluster was assigned a pit type; nothing to put in the dictionary");

    dict.reference.source = set.source;
    dict.reference.values = Matrix(picked.size(), set.dim());
    dict.coords = Matrix(picked.size(), e.coords.cols());
    for (std::size_t k = 0; k < picked.size(); ++k) {
        dict.reference.ids.push_back(set.ids[picked[k]]);
        dict.reference.flags.push_back("");
        for (std::size_t j = 0; j < set.dim(); ++j) dict.reference.values(k, j) = set.values(picked[k], j);
        for (std::size_t j = 0; j < e.coords.cols(); ++j) dict.coords(k, j) = e.coords(picked[k], j);
    }
    dict.compute_centroids();
    dictionary::save(ctx.dir, dict);
    ctx.result.artifacts.push_back("manifest.json");

    json per_type = json::object();
    for (PitType t : kPitTypes) {
        per_type[to_string(t)] = dict.of_type(t).size();
        if (!dict.has(t)) ctx.warn("dictionary has no " + to_string(t) + " entries");
    }
    ctx.result.summary = {{"entries", dict.entries.size()}, {"per_type", per_type}};
    ctx.note("dict: " + std::to_string(dict.entries.size()) + " entries");
}

// ---- synth --------------------------------------------------------------------

void run_synth(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto dict = read_dictionary(cfg);
    if (cfg.synth.background_seeds.empty())
        throw ConfigError("config key 'synth.background_seeds' is empty; list at least one pit-free texture image");
    std::vector<GrayImage> seeds;
    for (const auto& p : cfg.synth.background_seeds) {
        if (!fs::exists(p)) throw ConfigError("background seed " + p.string() + " not found");
        seeds.push_back(io::read_gray(p));
    }
    synth::TextureParams tp;
    tp.window = cfg.synth.texture_window;
    tp.epsilon = cfg.synth.texture_epsilon;
    tp.seed = cfg.seed + 1;  // its own stream family, apart from the scene seeds
    const auto pool = synth::grow_backgrounds(seeds, cfg.synth.backgrounds, cfg.synth.background_size,
                                              cfg.synth.background_size, tp);
    fs::create_directories(ctx.dir / "backgrounds");
    for (std::size_t i = 0; i < pool.images.size(); ++i)
        io::write_gray_png(ctx.dir / "backgrounds" / (pool.ids[i] + ".png"), pool.images[i]);

    const auto scenes = synth::compose_scenes(cfg.scene_spec(), dict, pool, cfg.seed, cfg.synth.n);
    const auto ds = synth::export_dataset(scenes, ctx.dir, cfg.seed);
    ctx.result.artifacts.insert(ctx.result.artifacts.end(), {"backgrounds/", "images/", "annotations.json", "manifest.json"});

    std::array<long long, 3> totals{};
    for (std::size_t i = 0; i < scenes.size(); ++i) {
        for (const auto& w : scenes[i].warnings) ctx.warn("scene " + std::to_string(i) + ": " + w);
        const auto c = scenes[i].counts();
        for (std::size_t k = 0; k < 3; ++k) totals[k] += c[k];
    }
    json per_type = json::object();
    for (PitType t : kPitTypes) per_type[to_string(t)] = totals[index_of(t)];
    ctx.result.summary = {{"scenes", scenes.size()},
                          {"ranges", cfg.synth.ranges},
                          {"instances", ds.annotations.size()},
                          {"per_type", per_type}};
    ctx.note("synth: " + std::to_string(scenes.size()) + " scenes, " + std::to_string(ds.annotations.size()) +
             " instances");
}

// ---- detect -------------------------------------------------------------------

fs::path synth_annotations(const config::PipelineConfig& cfg) { return stage_dir(cfg, "synth") / "annotations.json"; }

/// The images detections refer to: the wafer tiles, or the synthetic scenes.
analyze::TileManifest detection_manifest(const config::PipelineConfig& cfg)
{
    if (cfg.analyze.detect_on == "tiles") return tile_manifest(cfg);
    const fs::path ann = synth_annotations(cfg);
    const auto ds = coco::read_dataset(need(ann, "synth"));
    auto m = analyze::manifest_from_coco(ds, cfg.analyze.pixel_size_um);
    for (auto& t : m.tiles) t.image_path = ann.parent_path() / t.image_path;
    return m;
}

void run_detect(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto manifest = detection_manifest(cfg);
    std::vector<analyze::Detection> detections;
    json summary;

    if (!cfg.analyze.predictions.empty()) {
        if (!fs::exists(cfg.analyze.predictions))
            throw ConfigError("predictions file " + cfg.analyze.predictions.string() + " not found");
        std::ifstream in(cfg.analyze.predictions);
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw FormatError(cfg.analyze.predictions.string() + " is not valid JSON");
        auto rep = analyze::ingest_predictions(j, manifest);
        std::map<std::string, int> reasons;
        for (const auto& r : rep.rejected) reasons[r.reason]++;
        for (const auto& [reason, n] : reasons) ctx.warn(std::to_string(n) + " prediction records rejected: " + reason);
        if (rep.duplicates) ctx.warn(std::to_string(rep.duplicates) + " duplicate prediction records dropped");
        detections = std::move(rep.detections);
        summary = {{"source", "external"}, {"rejected", rep.rejected.size()}, {"duplicates", rep.duplicates}};
    } else {
        const auto dict = read_dictionary(cfg);
        if (dict.reference.dim() != features::kClassicalDim)
            throw ConfigError("the built-in detector needs a dictionary built from classical features; "
                              "set analyze.predictions to ingest external detections instead");
        // The gate model was trained for wafer tiles; synthetic scenes are clean by construction.
        std::unique_ptr<quality::QualityModel> gate;
        if (cfg.analyze.detect_on == "tiles") {
            if (cfg.quality.mode == "synthetic")
                gate = std::make_unique<quality::QualityModel>(
                    quality::load_model(need(stage_dir(cfg, "gate") / "model.json", "gate")));
            else if (cfg.quality.mode == "model")
                gate = std::make_unique<quality::QualityModel>(quality::load_model(cfg.quality.model));
        }
        const auto det_cfg = cfg.detector();
        std::vector<analyze::TileDetections> per_tile(manifest.tiles.size());
        parallel_for(manifest.tiles.size(), [&](std::size_t t) {
            const auto& tile = manifest.tiles[t];
            per_tile[t] = analyze::detect_tile(io::read_gray(need(tile.image_path, "synth")), dict, det_cfg, gate.get());
            for (auto& d : per_tile[t].detections) analyze::locate(d, tile, manifest.pixel_size_um);
        });
        std::size_t shape_rej = 0, quality_rej = 0;
        for (auto& pt : per_tile) {
            shape_rej += pt.shape_rejected;
            quality_rej += pt.quality_rejected;
            for (auto& d : pt.detections) detections.push_back(std::move(d));
        }
        summary = {{"source", "builtin"}, {"shape_rejected", shape_rej}, {"quality_rejected", quality_rej}};
    }

    write_json(ctx.output("detections.json"), {{"detect_on", cfg.analyze.detect_on},
                                               {"detections", analyze::detections_to_json(detections)}});
    const auto counts = analyze::count_detections(detections);
    std::ofstream out(ctx.output("counts.csv"));
    out << "image_id,tile_id,BPD,TED,TSD\n";
    std::array<double, 3> totals{};
    for (const auto& t : manifest.tiles) {
        auto it = counts.find(t.image_id);
        const std::array<double, 3> c = it == counts.end() ? std::array<double, 3>{} : it->second;
        out << t.image_id << ',' << t.tile_id << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
        for (std::size_t k = 0; k < 3; ++k) totals[k] += c[k];
    }
    summary["images"] = manifest.tiles.size();
    summary["detections"] = detections.size();
    for (PitType t : kPitTypes) summary["per_type"][to_string(t)] = totals[index_of(t)];
    ctx.result.summary = summary;
    ctx.note("detect: " + std::to_string(detections.size()) + " detections in " +
             std::to_string(manifest.tiles.size()) + " images");
}

std::vector<analyze::Detection> read_detections(const config::PipelineConfig& cfg)
{
    const json j = read_json(stage_dir(cfg, "detect") / "detections.json", "detect");
    if (!j.contains("detections")) throw FormatError("detections.json has no detections list");
    return analyze::detections_from_json(j["detections"]);
}

// ---- eval ---------------------------------------------------------------------

void run_eval(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    fs::path truth_path = cfg.analyze.truth;
    if (truth_path.empty()) {
        truth_path = need(synth_annotations(cfg), "synth");
    } else if (!fs::exists(truth_path)) {
        throw ConfigError("truth annotations " + truth_path.string() + " not found");
    }
    const auto truth = coco::read_dataset(truth_path);
    const auto detections = read_detections(cfg);

    auto truth_counts = analyze::count_annotations(truth);
    for (const auto& im : truth.images) truth_counts.try_emplace(im.id, std::array<double, 3>{});
    const auto report =
        analyze::evaluate(truth_counts, analyze::count_detections(detections), truth_path.filename().string());
    write_json(ctx.output("rmse.json"), analyze::to_json(report));
    analyze::write_errors_csv(ctx.output("errors.csv"), report);
    if (!report.excluded.empty())
        ctx.warn(std::to_string(report.excluded.size()) + " predicted images have no ground truth and were excluded");
    ctx.result.summary = analyze::to_json(report);
    ctx.note("eval: RMSE BPD " + num(report.rmse[0]) + ", TED " + num(report.rmse[1]) + ", TSD " + num(report.rmse[2]));
}

// ---- density ------------------------------------------------------------------

void run_density(Context& ctx)
{
    const auto& cfg = ctx.cfg;
    const auto manifest = detection_manifest(cfg);
    const auto detections = read_detections(cfg);
    const auto res = analyze::density_map(detections, manifest, cfg.analyze.bin_um, cfg.analyze.dedup_radius_px);
    json per_type = json::object();
    for (PitType t : kPitTypes) {
        const auto& m = res.maps[index_of(t)];
        analyze::write_density_csv(ctx.output("density_" + to_string(t) + ".csv"), m);
        analyze::write_density_png(ctx.output("density_" + to_string(t) + ".png"), m);
        per_type[to_string(t)] = m.total();
    }
    analyze::write_part_counts_csv(ctx.output("part_counts.csv"), analyze::part_counts(res.kept, manifest));

    analyze::SizeClasses classes;
    classes.upper_um = cfg.analyze.size_classes_um;
    classes.names.clear();
    for (std::size_t k = 0; k <= classes.upper_um.size(); ++k) classes.names.push_back("class" + std::to_string(k));
    if (classes.upper_um.size() == 2) classes.names = {"small", "medium", "large"};
    std::map<std::string, std::array<long long, 3>> sizes;
    for (const auto& n : classes.names) sizes[n] = {};
    std::size_t unsized = 0;
    for (const auto& d : res.kept) {
        if (d.area <= 0.0) {
            ++unsized;
            continue;
        }
        const auto br = analyze::burgers_radius(d.area, manifest.pixel_size_um, classes);
        sizes[br.size_class][index_of(d.type)]++;
    }
    std::ofstream out(ctx.output("size_classes.csv"));
    out << "size_class,BPD,TED,TSD\n";
    for (const auto& n : classes.names) {
        const auto& c = sizes[n];
        out << n << ',' << c[0] << ',' << c[1] << ',' << c[2] << '\n';
    }
    if (unsized) ctx.warn(std::to_string(unsized) + " detections without area left out of the size classes");
    if (!res.out_of_bounds.empty())
        ctx.warn(std::to_string(res.out_of_bounds.size()) + " detections fall outside the wafer grid");
    ctx.result.summary = {{"detections", detections.size()},
                          {"kept", res.kept.size()},
                          {"duplicates_removed", res.duplicates_removed},
                          {"out_of_bounds", res.out_of_bounds.size()},
                          {"bin_um", cfg.analyze.bin_um},
                          {"grid", {res.maps[0].nx, res.maps[0].ny}},
                          {"per_type", per_type}};
    ctx.note("density: " + std::to_string(res.kept.size()) + " pits after removing " +
             std::to_string(res.duplicates_removed) + " duplicates");
}

}  // namespace

StageResult run_subcommand(std::string_view name, const config::PipelineConfig& cfg, std::ostream* log)
{
    bool known = false;
    for (auto s : kStages) known = known || s == name;
    if (!known) throw ConfigError("unknown subcommand '" + std::string(name) + "'");
    config::validate(cfg);
    if (cfg.io.jobs > 0) kernels::set_thread_count(cfg.io.jobs);

    const fs::path dir = stage_dir(cfg, name);
    if (name == "report") {
        // Fail before touching anything when the inputs are missing.
        need(stage_dir(cfg, "detect") / "detections.json", "detect");
    }
    fs::remove_all(dir);
    fs::create_directories(dir);

    Context ctx{cfg, dir, {}, log};
    ctx.result.stage = std::string(name);
    try {
        if (name == "extract") run_extract(ctx);
        else if (name == "gate") run_gate(ctx);
        else if (name == "features") run_features(ctx);
        else if (name == "embed") run_embed(ctx);
        else if (name == "cluster") run_cluster(ctx);
        else if (name == "dict") run_dict(ctx);
        else if (name == "synth") run_synth(ctx);
        else if (name == "detect") run_detect(ctx);
        else if (name == "eval") run_eval(ctx);
        else if (name == "density") run_density(ctx);
        else {
            auto r = build_report(cfg, dir);
            ctx.result.artifacts = std::move(r.artifacts);
            ctx.result.summary = std::move(r.summary);
            for (auto& w : r.warnings) ctx.warn(w);
        }
    } catch (...) {
        // A half-written stage directory would look like valid input downstream.
        std::error_code ec;
        fs::remove_all(dir, ec);
        throw;
    }

    write_json(dir / "config.resolved.json", config::to_json(cfg));
    json summary = ctx.result.summary;
    summary["stage"] = ctx.result.stage;
    summary["warnings"] = ctx.result.warnings;
    json artifacts = json::array();
    for (const auto& a : ctx.result.artifacts) artifacts.push_back(a.generic_string());
    summary["artifacts"] = artifacts;
    write_json(dir / "summary.json", summary);
    return ctx.result;
}

}  // namespace etchpit::pipeline
