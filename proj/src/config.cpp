#include "etchpit/config.hpp"

#include "etchpit/error.hpp"

#include <algorithm>
#include <fstream>
#include <set>

namespace etchpit::config {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// Every schema field is listed once here; the writer, the reader and the
// unknown-key check all walk this list.
template <class V, class C>
void visit(V& v, C& c)
{
    v("", "seed", c.seed);

    v("io", "manifest", c.io.manifest);
    v("io", "work_dir", c.io.work_dir);
    v("io", "jobs", c.io.jobs);

    auto& ip = c.imgproc;
    v("imgproc", "ball_radius", ip.contrast.ball_radius);
    v("imgproc", "clahe_clip", ip.contrast.clahe_clip);
    v("imgproc", "clahe_tiles", ip.contrast.clahe_tiles);
    v("imgproc", "stretch_quantile", ip.contrast.stretch_quantile);
    v("imgproc", "min_contrast", ip.contrast.min_contrast);
    v("imgproc", "threshold", ip.threshold);
    v("imgproc", "morph", ip.morph);
    v("imgproc", "max_lengthiness", ip.gate.max_lengthiness);
    v("imgproc", "min_compactness", ip.gate.min_compactness);
    v("imgproc", "min_circularity", ip.gate.min_circularity);
    v("imgproc", "border", ip.border);
    v("imgproc", "min_area", ip.min_area);

    auto& q = c.quality;
    v("quality", "mode", q.mode);
    v("quality", "model", q.model);
    v("quality", "scores", q.scores);
    v("quality", "train_per_class", q.train_per_class);
    v("quality", "augment", q.augment);
    v("quality", "learning_rate", q.train.learning_rate);
    v("quality", "epochs", q.train.epochs);
    v("quality", "l2", q.train.l2);

    v("features", "source", c.features.source);
    v("features", "external", c.features.external);

    auto& e = c.embed;
    v("embed", "method", e.method);
    v("embed", "n_components", e.n_components);
    v("embed", "n_neighbors", e.n_neighbors);
    v("embed", "min_dist", e.min_dist);
    v("embed", "spread", e.spread);
    v("embed", "seed", e.seed);
    v("embed", "n_epochs", e.n_epochs);
    v("embed", "learning_rate", e.learning_rate);
    v("embed", "negative_sample_rate", e.negative_sample_rate);
    v("embed", "perplexity", e.perplexity);
    v("embed", "tsne_iterations", e.tsne_iterations);

    v("cluster", "min_cluster_size", c.cluster.min_cluster_size);
    v("cluster", "min_samples", c.cluster.min_samples);

    auto& s = c.synth;
    v("synth", "n", s.n);
    v("synth", "ranges", s.ranges);
    v("synth", "width", s.width);
    v("synth", "height", s.height);
    v("synth", "background_seeds", s.background_seeds);
    v("synth", "backgrounds", s.backgrounds);
    v("synth", "background_size", s.background_size);
    v("synth", "texture_window", s.texture_window);
    v("synth", "texture_epsilon", s.texture_epsilon);
    v("synth", "allow_overlap", s.allow_overlap);
    v("synth", "feather", s.feather);
    v("synth", "placement", s.placement);
    v("synth", "lagb_count", s.lagb.count);
    v("synth", "lagb_spacing", s.lagb.spacing);
    v("synth", "lagb_jitter", s.lagb.jitter);

    auto& a = c.analyze;
    v("analyze", "detect_on", a.detect_on);
    v("analyze", "predictions", a.predictions);
    v("analyze", "truth", a.truth);
    v("analyze", "pixel_size_um", a.pixel_size_um);
    v("analyze", "bin_um", a.bin_um);
    v("analyze", "dedup_radius_px", a.dedup_radius_px);
    v("analyze", "size_classes_um", a.size_classes_um);
}

std::string key_name(const char* section, const char* key)
{
    return *section ? std::string(section) + "." + key : std::string(key);
}

struct Writer {
    json out = json::object();

    json& slot(const char* section, const char* key)
    {
        if (!*section) return out[key];
        return out[section][key];
    }
    template <class T>
    void operator()(const char* section, const char* key, const T& value)
    {
        slot(section, key) = value;
    }
    void operator()(const char* section, const char* key, const fs::path& p) { slot(section, key) = p.generic_string(); }
    void operator()(const char* section, const char* key, const std::vector<fs::path>& ps)
    {
        json arr = json::array();
        for (const auto& p : ps) arr.push_back(p.generic_string());
        slot(section, key) = arr;
    }
    void operator()(const char* section, const char* key, const embed::Method& m)
    {
        slot(section, key) = embed::to_string(m);
    }
};

[[noreturn]] void bad_type(const char* section, const char* key, const char* want)
{
    throw ConfigError("config key '" + key_name(section, key) + "' must be " + want);
}

struct Reader {
    const json& in;

    const json* find(const char* section, const char* key) const
    {
        const json* obj = &in;
        if (*section) {
            auto it = in.find(section);
            if (it == in.end()) return nullptr;
            obj = &*it;
        }
        auto it = obj->find(key);
        return it == obj->end() ? nullptr : &*it;
    }

    void operator()(const char* s, const char* k, int& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_number_integer()) bad_type(s, k, "an integer");
            v = j->get<int>();
        }
    }
    void operator()(const char* s, const char* k, std::uint64_t& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_number_integer() || (!j->is_number_unsigned() && j->get<long long>() < 0))
                bad_type(s, k, "a non-negative integer");
            v = j->get<std::uint64_t>();
        }
    }
    void operator()(const char* s, const char* k, double& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_number()) bad_type(s, k, "a number");
            v = j->get<double>();
        }
    }
    void operator()(const char* s, const char* k, bool& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_boolean()) bad_type(s, k, "true or false");
            v = j->get<bool>();
        }
    }
    void operator()(const char* s, const char* k, std::string& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_string()) bad_type(s, k, "a string");
            v = j->get<std::string>();
        }
    }
    void operator()(const char* s, const char* k, fs::path& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_string()) bad_type(s, k, "a path string");
            v = j->get<std::string>();
        }
    }
    void operator()(const char* s, const char* k, std::vector<fs::path>& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_array()) bad_type(s, k, "an array of path strings");
            v.clear();
            for (const auto& e : *j) {
                if (!e.is_string()) bad_type(s, k, "an array of path strings");
                v.emplace_back(e.get<std::string>());
            }
        }
    }
    void operator()(const char* s, const char* k, std::vector<double>& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_array()) bad_type(s, k, "an array of numbers");
            v.clear();
            for (const auto& e : *j) {
                if (!e.is_number()) bad_type(s, k, "an array of numbers");
                v.push_back(e.get<double>());
            }
        }
    }
    void operator()(const char* s, const char* k, embed::Method& v)
    {
        if (const json* j = find(s, k)) {
            if (!j->is_string()) bad_type(s, k, "one of umap, pca, tsne");
            try {
                v = embed::parse_method(j->get<std::string>());
            } catch (const Error&) {
                bad_type(s, k, "one of umap, pca, tsne");
            }
        }
    }
};

struct KeyCollector {
    std::set<std::string> sections;
    std::set<std::string> keys;
    template <class T>
    void operator()(const char* section, const char* key, const T&)
    {
        if (*section) sections.insert(section);
        keys.insert(key_name(section, key));
    }
};

void reject_unknown(const json& j)
{
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    const PipelineConfig defaults;
    KeyCollector known;
    visit(known, defaults);
    for (const auto& [k, v] : j.items()) {
        if (known.sections.count(k)) {
            if (!v.is_object()) throw ConfigError("config section '" + k + "' must be an object");
            for (const auto& [k2, v2] : v.items()) {
                (void)v2;
                if (!known.keys.count(k + "." + k2)) throw ConfigError("unknown config key '" + k + "." + k2 + "'");
            }
        } else if (!known.keys.count(k)) {
            throw ConfigError("unknown config key '" + k + "'");
        }
    }
}

fs::path anchored(const fs::path& p, const fs::path& base)
{
    if (p.empty() || p.is_absolute()) return p;
    return (base / p).lexically_normal();
}

}  // namespace

analyze::DetectorConfig PipelineConfig::detector() const
{
    analyze::DetectorConfig d;
    d.contrast = imgproc.contrast;
    d.threshold = imgproc.threshold;
    d.morph = imgproc::parse_morph_plan(imgproc.morph);
    d.gate = imgproc.gate;
    d.border = imgproc.border;
    d.min_area = static_cast<std::size_t>(imgproc.min_area);
    return d;
}

synth::SceneSpec PipelineConfig::scene_spec() const
{
    synth::SceneSpec s = synth.ranges == "high" ? synth::SceneSpec::high_density() : synth::SceneSpec::low_density();
    s.width = synth.width;
    s.height = synth.height;
    s.allow_overlap = synth.allow_overlap;
    s.feather = synth.feather;
    s.placement = synth.placement == "lagb" ? synth::Placement::LagbLine : synth::Placement::Random;
    s.lagb = synth.lagb;
    return s;
}

cluster::ClusterParams PipelineConfig::cluster_params(std::size_t n) const
{
    cluster::ClusterParams p = cluster::ClusterParams::defaults_for(n);
    if (cluster.min_cluster_size > 0) p.min_cluster_size = cluster.min_cluster_size;
    p.min_samples = cluster.min_samples;
    return p;
}

json to_json(const PipelineConfig& c)
{
    Writer w;
    visit(w, c);
    return w.out;
}

PipelineConfig from_json(const json& j)
{
    reject_unknown(j);
    PipelineConfig c;
    Reader r{j};
    visit(r, c);
    return c;
}

void apply_override(json& j, const std::string& assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    const auto dot = key.find('.');
    if (dot == std::string::npos) {
        j[key] = value;
        return;
    }
    const std::string section = key.substr(0, dot);
    const std::string field = key.substr(dot + 1);
    if (field.empty() || field.find('.') != std::string::npos) throw ConfigError("unknown config key '" + key + "'");
    if (j.contains(section) && !j[section].is_object()) throw ConfigError("config section '" + section + "' must be an object");
    j[section][field] = value;
}

void resolve_paths(PipelineConfig& c, const fs::path& base)
{
    c.io.manifest = anchored(c.io.manifest, base);
    c.io.work_dir = anchored(c.io.work_dir, base);
    c.quality.model = anchored(c.quality.model, base);
    c.quality.scores = anchored(c.quality.scores, base);
    c.features.external = anchored(c.features.external, base);
    for (auto& p : c.synth.background_seeds) p = anchored(p, base);
    c.analyze.predictions = anchored(c.analyze.predictions, base);
    c.analyze.truth = anchored(c.analyze.truth, base);
}

void validate(const PipelineConfig& c)
{
    auto require = [](bool ok, const std::string& key, const std::string& what) {
        if (!ok) throw ConfigError("config key '" + key + "' " + what);
    };
    require(c.io.jobs >= 0, "io.jobs", "must be >= 0");
    require(c.imgproc.threshold > 0.0 && c.imgproc.threshold < 1.0, "imgproc.threshold", "must lie in (0,1)");
    require(c.imgproc.contrast.ball_radius >= 1, "imgproc.ball_radius", "must be >= 1");
    require(c.imgproc.contrast.clahe_tiles >= 1, "imgproc.clahe_tiles", "must be >= 1");
    require(c.imgproc.contrast.stretch_quantile >= 0.0 && c.imgproc.contrast.stretch_quantile < 0.5,
            "imgproc.stretch_quantile", "must lie in [0,0.5)");
    require(c.imgproc.contrast.min_contrast > 0.0, "imgproc.min_contrast", "must be > 0");
    require(c.imgproc.border >= 0, "imgproc.border", "must be >= 0");
    require(c.imgproc.min_area >= 1, "imgproc.min_area", "must be >= 1");
    try {
        (void)imgproc::parse_morph_plan(c.imgproc.morph);
    } catch (const Error& e) {
        throw ConfigError("config key 'imgproc.morph': " + std::string(e.what()));
    }

    const auto& q = c.quality;
    require(q.mode == "none" || q.mode == "model" || q.mode == "scores" || q.mode == "synthetic", "quality.mode",
            "must be one of none, model, scores, synthetic");
    require(q.mode != "model" || !q.model.empty(), "quality.model", "is required when quality.mode is model");
    require(q.mode != "scores" || !q.scores.empty(), "quality.scores", "is required when quality.mode is scores");
    require(q.train_per_class >= 10, "quality.train_per_class", "must be >= 10");
    require(q.train.epochs >= 1, "quality.epochs", "must be >= 1");
    require(q.train.learning_rate > 0.0, "quality.learning_rate", "must be > 0");
    require(q.train.l2 >= 0.0, "quality.l2", "must be >= 0");

    require(c.features.source == "classical" || c.features.source == "external", "features.source",
            "must be classical or external");
    require(c.features.source != "external" || !c.features.external.empty(), "features.external",
            "is required when features.source is external");

    const auto& e = c.embed;
    require(e.n_components >= 1, "embed.n_components", "must be >= 1");
    require(e.n_neighbors >= 2, "embed.n_neighbors", "must be >= 2");
    require(e.min_dist >= 0.0, "embed.min_dist", "must be >= 0");
    require(e.spread > 0.0 && e.min_dist <= e.spread, "embed.spread", "must be > 0 and >= embed.min_dist");
    require(e.n_epochs >= 1, "embed.n_epochs", "must be >= 1");
    require(e.learning_rate > 0.0, "embed.learning_rate", "must be > 0");
    require(e.negative_sample_rate >= 0, "embed.negative_sample_rate", "must be >= 0");
    require(e.perplexity > 0.0, "embed.perplexity", "must be > 0");
    require(e.tsne_iterations >= 1, "embed.tsne_iterations", "must be >= 1");

    require(c.cluster.min_cluster_size == 0 || c.cluster.min_cluster_size >= 2, "cluster.min_cluster_size",
            "must be 0 (automatic) or >= 2");
    require(c.cluster.min_samples >= 1, "cluster.min_samples", "must be >= 1");

    const auto& s = c.synth;
    require(s.n >= 1, "synth.n", "must be >= 1");
    require(s.ranges == "low" || s.ranges == "high", "synth.ranges", "must be low or high");
    require(s.width >= 16 && s.height >= 16, "synth.width", "and synth.height must be >= 16");
    require(s.backgrounds >= 1, "synth.backgrounds", "must be >= 1");
    require(s.background_size >= std::max(s.width, s.height), "synth.background_size",
            "must be at least the scene width and height");
    require(s.texture_window >= 3 && s.texture_window % 2 == 1, "synth.texture_window", "must be odd and >= 3");
    require(s.texture_epsilon >= 0.0, "synth.texture_epsilon", "must be >= 0");
    require(s.feather >= 0, "synth.feather", "must be >= 0");
    require(s.placement == "random" || s.placement == "lagb", "synth.placement", "must be random or lagb");
    require(s.lagb.count >= 1, "synth.lagb_count", "must be >= 1");
    require(s.lagb.spacing >= 0.0, "synth.lagb_spacing", "must be >= 0");
    require(s.lagb.jitter >= 0.0 && s.lagb.jitter < 0.5, "synth.lagb_jitter", "must lie in [0,0.5)");

    const auto& a = c.analyze;
    require(a.detect_on == "tiles" || a.detect_on == "synth", "analyze.detect_on", "must be tiles or synth");
    require(a.pixel_size_um > 0.0, "analyze.pixel_size_um", "must be > 0");
    require(a.bin_um > 0.0, "analyze.bin_um", "must be > 0");
    require(a.dedup_radius_px >= 0.0, "analyze.dedup_radius_px", "must be >= 0");
    for (std::size_t i = 0; i < a.size_classes_um.size(); ++i)
        require(a.size_classes_um[i] > 0.0 && (i == 0 || a.size_classes_um[i] > a.size_classes_um[i - 1]),
                "analyze.size_classes_um", "must be positive and increasing");
}

PipelineConfig load(const fs::path& path, const std::vector<std::string>& overrides)
{
    PipelineConfig c;
    if (!path.empty()) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file " + path.string());
        json j = json::parse(in, nullptr, false);
        if (j.is_discarded()) throw ConfigError("config file " + path.string() + " is not valid JSON");
        c = from_json(j);
        resolve_paths(c, fs::absolute(path).parent_path());
    }
    if (!overrides.empty()) {
        json j = to_json(c);
        for (const auto& o : overrides) apply_override(j, o);
        c = from_json(j);
    }
    resolve_paths(c, fs::current_path());
    validate(c);
    return c;
}

}  // namespace etchpit::config
