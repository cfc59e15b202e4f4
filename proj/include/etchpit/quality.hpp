#pragma once

#include "etchpit/image.hpp"
#include "etchpit/imgproc.hpp"
#include "etchpit/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

/// Binary patch-quality gate: class 1 = exactly one clean etch pit,
/// class 0 = overlapping pits or artifacts.
namespace etchpit::quality {

inline constexpr int kSide = 64;
inline constexpr int kGrid = 4;
inline constexpr std::size_t kFeatureDim = 3 * kGrid * kGrid * 2;

/// Three 64x64 channels, all values in [0,1].
struct ChannelStack {
    GrayImage gray;
    GrayImage fft_mag;  // log(1+|F|), DC at (32,32), divided by its maximum
    GrayImage wavelet;  // Haar level-1 map upsampled, divided by its maximum
};

/// Centered log-magnitude spectrum of a square power-of-two image.
GrayImage magnitude_spectrum(const GrayImage& img);

struct HaarBands {
    GrayImage ll, lh, hl, hh;  // each half size
};
/// Orthonormal single-level 2-D Haar transform (even dimensions).
HaarBands haar_level1(const GrayImage& img);

/// Local mean (LL/2) plus detail magnitude sqrt(LH^2+HL^2+HH^2), nearest-upsampled.
GrayImage wavelet_map(const GrayImage& img);

/// Resamples to 64x64 (bilinear) unless already that size, then builds the channels.
ChannelStack build_channels(const GrayImage& patch);

/// Layout: channel (gray, fft, wavelet) x cell (4x4, row-major) x (mean, std).
std::vector<double> featurize_channels(const ChannelStack& stack);

inline std::vector<double> patch_features(const GrayImage& patch) { return featurize_channels(build_channels(patch)); }

/// Hash of the feature layout description; stored in model files.
std::uint64_t feature_layout_hash();

struct LabeledPatchSet {
    std::vector<GrayImage> patches;
    std::vector<int> labels;               // 0 or 1
    std::vector<std::uint8_t> augmented;   // 1 for generated copies

    std::size_t size() const { return patches.size(); }
    void add(GrayImage p, int label, bool aug = false)
    {
        patches.push_back(std::move(p));
        labels.push_back(label);
        augmented.push_back(aug ? 1 : 0);
    }
};

struct AugmentParams {
    bool rotations = true;     // 90, 180, 270 degrees
    double noise_sigma = 0.02; // additive Gaussian copy; 0 disables
};

/// Adds rotated and noisy copies; labels are carried unchanged. The larger
/// class is subsampled (seeded) when class counts differ by more than 5%.
LabeledPatchSet augment(const LabeledPatchSet& data, std::uint64_t seed, const AugmentParams& params = {});

struct TrainParams {
    double learning_rate = 0.5;
    int epochs = 400;
    std::uint64_t seed = 0;
    double l2 = 1e-4;
};

struct QualityModel {
    std::vector<double> weights;
    double bias = 0.0;
    std::vector<double> feature_mean;
    std::vector<double> feature_scale;
    TrainParams params;
    double final_loss = 0.0;
    std::vector<double> loss_history;
    std::string augmentation = "none";
};

/// Mean cross-entropy (+ 0.5*l2*|w|^2) of a logistic model on standardized
/// features; fills the gradient when the spans are non-empty.
double cross_entropy(std::span<const double> w, double b, const Matrix& x, std::span<const int> y, double l2,
                     std::span<double> grad_w, double* grad_b);

/// Full-batch gradient descent. Throws DataError when only one class is present.
QualityModel train_quality(const Matrix& features, std::span<const int> labels, const TrainParams& params);
QualityModel train_quality(const LabeledPatchSet& data, const TrainParams& params);

struct QualityPrediction {
    int label = 0;
    double probability = 0.0;
};

/// probability = sigmoid(w.x + b); label 1 iff probability >= 0.5.
QualityPrediction predict_from_features(const QualityModel& model, std::span<const double> features);
QualityPrediction predict_quality(const QualityModel& model, const GrayImage& patch);

/// Stratified fold assignment; fold sizes differ by at most one.
std::vector<std::vector<std::size_t>> stratified_folds(std::span<const int> labels, int k, std::uint64_t seed);

struct CrossValResult {
    std::vector<double> fold_accuracy;
    double mean() const;
};

/// k-fold CV; when `augment_train` is set only the training folds are augmented.
CrossValResult crossval(const LabeledPatchSet& data, int k, const TrainParams& params, bool augment_train = false);
CrossValResult crossval(const Matrix& features, std::span<const int> labels, int k, const TrainParams& params);

/// patch_id -> probability, from an externally produced CSV (header `patch_id,probability`).
using ScoreTable = std::map<std::string, double>;
ScoreTable read_scores_csv(const std::filesystem::path& path);

/// External score wins over the model when the patch id is listed.
QualityPrediction gate_patch(const QualityModel* model, const ScoreTable* scores, const std::string& patch_id,
                             const GrayImage& patch);

void save_model(const std::filesystem::path& path, const QualityModel& model);
QualityModel load_model(const std::filesystem::path& path);

}  // namespace etchpit::quality
