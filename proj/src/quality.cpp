#include "etchpit/quality.hpp"

#include "etchpit/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace etchpit::quality {

namespace {

using cd = std::complex<double>;

void fft_inplace(std::vector<cd>& a)
{
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * 3.14159265358979323846 / static_cast<double>(len);
        const cd wl(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                const cd u = a[i + j];
                const cd v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wl;
            }
        }
    }
}

bool is_pow2(int n) { return n > 0 && (n & (n - 1)) == 0; }

void scale_by_max(GrayImage& img)
{
    float m = 0.0f;
    for (float v : img.data()) m = std::max(m, v);
    if (m <= 0.0f) return;
    for (float& v : img.data()) v /= m;
}

double sigmoid(double z)
{
    if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

Matrix featurize_all(const std::vector<GrayImage>& patches)
{
    Matrix x(patches.size(), kFeatureDim);
    for (std::size_t i = 0; i < patches.size(); ++i) {
        const auto f = patch_features(patches[i]);
        std::copy(f.begin(), f.end(), x.row(i).begin());
    }
    return x;
}

Matrix standardize(const Matrix& x, const std::vector<double>& mean, const std::vector<double>& scale)
{
    Matrix z(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.cols(); ++j) z(i, j) = (x(i, j) - mean[j]) / scale[j];
    return z;
}

}  // namespace

GrayImage magnitude_spectrum(const GrayImage& img)
{
    const int w = img.width(), h = img.height();
    if (!is_pow2(w) || !is_pow2(h)) throw PreconditionError("magnitude_spectrum needs power-of-two dimensions");
    std::vector<cd> buf(static_cast<std::size_t>(w) * h);
    for (std::size_t i = 0; i < buf.size(); ++i) buf[i] = img.data()[i];
    std::vector<cd> line(static_cast<std::size_t>(std::max(w, h)));
    line.resize(static_cast<std::size_t>(w));
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) line[x] = buf[static_cast<std::size_t>(y) * w + x];
        fft_inplace(line);
        for (int x = 0; x < w; ++x) buf[static_cast<std::size_t>(y) * w + x] = line[x];
    }
    line.resize(static_cast<std::size_t>(h));
    for (int x = 0; x < w; ++x) {
        for (int y = 0; y < h; ++y) line[y] = buf[static_cast<std::size_t>(y) * w + x];
        fft_inplace(line);
        for (int y = 0; y < h; ++y) buf[static_cast<std::size_t>(y) * w + x] = line[y];
    }
    GrayImage out(w, h);
    for (int v = 0; v < h; ++v) {
        for (int u = 0; u < w; ++u) {
            const double mag = std::abs(buf[static_cast<std::size_t>(v) * w + u]);
            out.at((u + w / 2) % w, (v + h / 2) % h) = static_cast<float>(std::log1p(mag));
        }
    }
    scale_by_max(out);
    return out;
}

HaarBands haar_level1(const GrayImage& img)
{
    if (img.width() % 2 || img.height() % 2) throw PreconditionError("haar_level1 needs even dimensions");
    const int w = img.width() / 2, h = img.height() / 2;
    HaarBands b{GrayImage(w, h), GrayImage(w, h), GrayImage(w, h), GrayImage(w, h)};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const double a = img.at(2 * x, 2 * y), c = img.at(2 * x + 1, 2 * y);
            const double d = img.at(2 * x, 2 * y + 1), e = img.at(2 * x + 1, 2 * y + 1);
            b.ll.at(x, y) = static_cast<float>((a + c + d + e) / 2.0);
            b.lh.at(x, y) = static_cast<float>((a - c + d - e) / 2.0);
            b.hl.at(x, y) = static_cast<float>((a + c - d - e) / 2.0);
            b.hh.at(x, y) = static_cast<float>((a - c - d + e) / 2.0);
        }
    }
    return b;
}

GrayImage wavelet_map(const GrayImage& img)
{
    const HaarBands b = haar_level1(img);
    GrayImage out(img.width(), img.height());
    for (int y = 0; y < img.height(); ++y) {
        for (int x = 0; x < img.width(); ++x) {
            const int sx = x / 2, sy = y / 2;
            const double lh = b.lh.at(sx, sy), hl = b.hl.at(sx, sy), hh = b.hh.at(sx, sy);
            out.at(x, y) = static_cast<float>(b.ll.at(sx, sy) / 2.0 + std::sqrt(lh * lh + hl * hl + hh * hh));
        }
    }
    scale_by_max(out);
    return out;
}

ChannelStack build_channels(const GrayImage& patch)
{
    ChannelStack s;
    s.gray = (patch.width() == kSide && patch.height() == kSide) ? patch : resample_bilinear(patch, kSide, kSide);
    for (float& v : s.gray.data()) v = std::clamp(v, 0.0f, 1.0f);
    s.fft_mag = magnitude_spectrum(s.gray);
    s.wavelet = wavelet_map(s.gray);
    return s;
}

std::vector<double> featurize_channels(const ChannelStack& stack)
{
    std::vector<double> f;
    f.reserve(kFeatureDim);
    const int cell = kSide / kGrid;
    for (const GrayImage* ch : {&stack.gray, &stack.fft_mag, &stack.wavelet}) {
        for (int cy = 0; cy < kGrid; ++cy) {
            for (int cx = 0; cx < kGrid; ++cx) {
                double sum = 0.0;
                for (int y = cy * cell; y < (cy + 1) * cell; ++y)
                    for (int x = cx * cell; x < (cx + 1) * cell; ++x) sum += ch->at(x, y);
                const double mean = sum / (cell * cell);
                double var = 0.0;
                for (int y = cy * cell; y < (cy + 1) * cell; ++y)
                    for (int x = cx * cell; x < (cx + 1) * cell; ++x) {
                        const double d = ch->at(x, y) - mean;
                        var += d * d;
                    }
                f.push_back(mean);
                f.push_back(std::sqrt(var / (cell * cell)));
            }
        }
    }
    return f;
}

std::uint64_t feature_layout_hash()
{
    const std::string layout = "channels=gray,fft_logmag_centered,haar1_map;side=64;grid=4x4;stats=mean,std;dim=96";
    std::uint64_t h = 1469598103934665603ull;  // FNV-1a
    for (unsigned char c : layout) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

LabeledPatchSet augment(const LabeledPatchSet& data, std::uint64_t seed, const AugmentParams& params)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, params.noise_sigma > 0 ? params.noise_sigma : 1.0);
    LabeledPatchSet all;
    for (std::size_t i = 0; i < data.size(); ++i) {
        all.add(data.patches[i], data.labels[i], data.augmented.empty() ? false : data.augmented[i] != 0);
        if (params.rotations)
            for (int q = 1; q <= 3; ++q) all.add(rotate90(data.patches[i], q), data.labels[i], true);
        if (params.noise_sigma > 0) {
            GrayImage n = data.patches[i];
            for (float& v : n.data()) v = std::clamp(static_cast<float>(v + noise(rng)), 0.0f, 1.0f);
            all.add(std::move(n), data.labels[i], true);
        }
    }

    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < all.size(); ++i) by_class[all.labels[i] != 0].push_back(i);
    const std::size_t lo = std::min(by_class[0].size(), by_class[1].size());
    const std::size_t hi = std::max(by_class[0].size(), by_class[1].size());
    if (lo == 0 || static_cast<double>(hi - lo) <= 0.05 * static_cast<double>(hi)) return all;

    auto& big = by_class[0].size() > by_class[1].size() ? by_class[0] : by_class[1];
    std::shuffle(big.begin(), big.end(), rng);
    big.resize(lo);
    std::vector<std::size_t> keep = by_class[0];
    keep.insert(keep.end(), by_class[1].begin(), by_class[1].end());
    std::sort(keep.begin(), keep.end());
    LabeledPatchSet balanced;
    for (std::size_t i : keep) balanced.add(all.patches[i], all.labels[i], all.augmented[i] != 0);
    return balanced;
}

double cross_entropy(std::span<const double> w, double b, const Matrix& x, std::span<const int> y, double l2,
                     std::span<double> grad_w, double* grad_b)
{
    const std::size_t n = x.rows();
    const bool want_grad = !grad_w.empty();
    if (want_grad) std::fill(grad_w.begin(), grad_w.end(), 0.0);
    double gb = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = x.row(i);
        double z = b;
        for (std::size_t j = 0; j < w.size(); ++j) z += w[j] * row[j];
        // -[y log s(z) + (1-y) log(1-s(z))] = softplus(z) - y z
        loss += softplus(z) - (y[i] ? z : 0.0);
        if (want_grad) {
            const double r = sigmoid(z) - (y[i] ? 1.0 : 0.0);
            for (std::size_t j = 0; j < w.size(); ++j) grad_w[j] += r * row[j];
            gb += r;
        }
    }
    const double inv = 1.0 / static_cast<double>(n);
    loss *= inv;
    double reg = 0.0;
    for (double v : w) reg += v * v;
    loss += 0.5 * l2 * reg;
    if (want_grad) {
        for (std::size_t j = 0; j < w.size(); ++j) grad_w[j] = grad_w[j] * inv + l2 * w[j];
        if (grad_b) *grad_b = gb * inv;
    }
    return loss;
}

QualityModel train_quality(const Matrix& features, std::span<const int> labels, const TrainParams& params)
{
    if (features.rows() != labels.size()) throw PreconditionError("feature/label count mismatch");
    const auto ones = std::count_if(labels.begin(), labels.end(), [](int v) { return v != 0; });
    if (ones == 0 || ones == static_cast<std::ptrdiff_t>(labels.size()))
        throw DataError("training data must contain both classes");

    const std::size_t d = features.cols();
    QualityModel m;
    m.params = params;
    m.feature_mean.assign(d, 0.0);
    m.feature_scale.assign(d, 1.0);
    const double n = static_cast<double>(features.rows());
    for (std::size_t i = 0; i < features.rows(); ++i)
        for (std::size_t j = 0; j < d; ++j) m.feature_mean[j] += features(i, j) / n;
    for (std::size_t j = 0; j < d; ++j) {
        double var = 0.0;
        for (std::size_t i = 0; i < features.rows(); ++i) {
            const double dv = features(i, j) - m.feature_mean[j];
            var += dv * dv;
        }
        const double sd = std::sqrt(var / n);
        m.feature_scale[j] = sd > 1e-12 ? sd : 1.0;
    }
    const Matrix z = standardize(features, m.feature_mean, m.feature_scale);

    std::mt19937_64 rng(params.seed);
    std::normal_distribution<double> init(0.0, 0.01);
    m.weights.resize(d);
    for (double& v : m.weights) v = init(rng);
    m.bias = 0.0;

    std::vector<double> gw(d);
    double gb = 0.0;
    for (int e = 0; e < params.epochs; ++e) {
        const double loss = cross_entropy(m.weights, m.bias, z, labels, params.l2, gw, &gb);
        m.loss_history.push_back(loss);
        for (std::size_t j = 0; j < d; ++j) m.weights[j] -= params.learning_rate * gw[j];
        m.bias -= params.learning_rate * gb;
    }
    m.final_loss = cross_entropy(m.weights, m.bias, z, labels, params.l2, {}, nullptr);
    return m;
}

QualityModel train_quality(const LabeledPatchSet& data, const TrainParams& params)
{
    const Matrix x = featurize_all(data.patches);
    QualityModel m = train_quality(x, data.labels, params);
    const bool any_aug = std::any_of(data.augmented.begin(), data.augmented.end(), [](auto v) { return v != 0; });
    if (any_aug) m.augmentation = "rot90/180/270+gauss0.02";
    return m;
}

QualityPrediction predict_from_features(const QualityModel& model, std::span<const double> features)
{
    if (features.size() != model.weights.size()) throw PreconditionError("feature dimension does not match model");
    double z = model.bias;
    for (std::size_t j = 0; j < features.size(); ++j)
        z += model.weights[j] * (features[j] - model.feature_mean[j]) / model.feature_scale[j];
    QualityPrediction p;
    p.probability = sigmoid(z);
    p.label = p.probability >= 0.5 ? 1 : 0;
    return p;
}

QualityPrediction predict_quality(const QualityModel& model, const GrayImage& patch)
{
    return predict_from_features(model, patch_features(patch));
}

std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed)
{
    if (k < 2) throw PreconditionError("k must be >= 2");
    if (labels.size() < static_cast<std::size_t>(k)) throw PreconditionError("fewer samples than folds");
    std::vector<std::size_t> by_class[2];
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i] != 0].push_back(i);
    for (const auto& c : by_class)
        if (!c.empty() && c.size() < static_cast<std::size_t>(k))
            throw PreconditionError("k = " + std::to_string(k) + " exceeds a class size of " + std::to_string(c.size()));
    std::mt19937_64 rng(seed);
    std::vector<std::vector<std::size_t>> folds(static_cast<std::size_t>(k));
    std::size_t next = 0;
    for (auto& c : by_class) {
        std::shuffle(c.begin(), c.end(), rng);
        for (std::size_t i : c) {
            folds[next].push_back(i);
            next = (next + 1) % folds.size();
        }
    }
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

double CrossValResult::mean() const
{
    if (fold_accuracy.empty()) return 0.0;
    return std::accumulate(fold_accuracy.begin(), fold_accuracy.end(), 0.0) / static_cast<double>(fold_accuracy.size());
}

CrossValResult crossval(const Matrix& features, std::span<const int> labels, int k, const TrainParams& params)
{
    const auto folds = stratified_folds(labels, k, params.seed);
    CrossValResult r;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> test(labels.size(), 0);
        for (std::size_t i : folds[f]) test[i] = 1;
        const std::size_t n_train = labels.size() - folds[f].size();
        Matrix xtr(n_train, features.cols());
        std::vector<int> ytr;
        ytr.reserve(n_train);
        for (std::size_t i = 0, row = 0; i < labels.size(); ++i) {
            if (test[i]) continue;
            std::copy(features.row(i).begin(), features.row(i).end(), xtr.row(row++).begin());
            ytr.push_back(labels[i]);
        }
        const QualityModel m = train_quality(xtr, ytr, params);
        std::size_t correct = 0;
        for (std::size_t i : folds[f]) correct += predict_from_features(m, features.row(i)).label == (labels[i] != 0);
        r.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(folds[f].size()));
    }
    return r;
}

CrossValResult crossval(const LabeledPatchSet& data, int k, const TrainParams& params, bool augment_train)
{
    if (!augment_train) return crossval(featurize_all(data.patches), data.labels, k, params);
    const auto folds = stratified_folds(data.labels, k, params.seed);
    CrossValResult r;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<char> test(data.size(), 0);
        for (std::size_t i : folds[f]) test[i] = 1;
        LabeledPatchSet train;
        for (std::size_t i = 0; i < data.size(); ++i)
            if (!test[i]) train.add(data.patches[i], data.labels[i]);
        const QualityModel m = train_quality(augment(train, params.seed + f), params);
        std::size_t correct = 0;
        for (std::size_t i : folds[f]) correct += predict_quality(m, data.patches[i]).label == (data.labels[i] != 0);
        r.fold_accuracy.push_back(static_cast<double>(correct) / static_cast<double>(folds[f].size()));
    }
    return r;
}

ScoreTable read_scores_csv(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open score file " + path.string());
    ScoreTable t;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected patch_id,probability");
        const std::string id = line.substr(0, comma);
        const std::string val = line.substr(comma + 1);
        if (lineno == 1 && id == "patch_id") continue;
        double p = 0.0;
        try {
            std::size_t used = 0;
            p = std::stod(val, &used);
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(lineno) + ": bad probability '" + val + "'");
        }
        if (!(p >= 0.0 && p <= 1.0)) throw FormatError(path.string() + ":" + std::to_string(lineno) + ": probability outside [0,1]");
        t[id] = p;
    }
    return t;
}

QualityPrediction gate_patch(const QualityModel* model, const ScoreTable* scores, const std::string& patch_id,
                             const GrayImage& patch)
{
    if (scores) {
        if (auto it = scores->find(patch_id); it != scores->end()) return {it->second >= 0.5 ? 1 : 0, it->second};
    }
    if (!model) throw ConfigError("no quality model and no external score for patch " + patch_id);
    return predict_quality(*model, patch);
}

void save_model(const std::filesystem::path& path, const QualityModel& m)
{
    nlohmann::json j;
    j["format"] = "etchpit-quality-model";
    j["version"] = 1;
    j["feature_layout_hash"] = feature_layout_hash();
    j["weights"] = m.weights;
    j["bias"] = m.bias;
    j["feature_mean"] = m.feature_mean;
    j["feature_scale"] = m.feature_scale;
    j["training"] = {{"learning_rate", m.params.learning_rate},
                     {"epochs", m.params.epochs},
                     {"seed", m.params.seed},
                     {"l2", m.params.l2},
                     {"final_loss", m.final_loss},
                     {"augmentation", m.augmentation}};
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out) throw DataError("cannot write model " + path.string());
    out << j.dump(1) << '\n';
}

QualityModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw DataError("cannot open model " + path.string());
    nlohmann::json j;
    try {
        in >> j;
        if (j.at("format") != "etchpit-quality-model") throw FormatError("not a quality model: " + path.string());
        if (j.at("feature_layout_hash").get<std::uint64_t>() != feature_layout_hash())
            throw FormatError("model " + path.string() + " was trained on a different feature layout");
        QualityModel m;
        m.weights = j.at("weights").get<std::vector<double>>();
        m.bias = j.at("bias").get<double>();
        m.feature_mean = j.at("feature_mean").get<std::vector<double>>();
        m.feature_scale = j.at("feature_scale").get<std::vector<double>>();
        const auto& t = j.at("training");
        m.params.learning_rate = t.at("learning_rate");
        m.params.epochs = t.at("epochs");
        m.params.seed = t.at("seed");
        m.params.l2 = t.at("l2");
        m.final_loss = t.at("final_loss");
        m.augmentation = t.at("augmentation");
        if (m.weights.size() != kFeatureDim || m.feature_mean.size() != kFeatureDim || m.feature_scale.size() != kFeatureDim)
            throw FormatError("model " + path.string() + " has the wrong weight dimension");
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("malformed model " + path.string() + ": " + e.what());
    }
}

}  // namespace etchpit::quality
