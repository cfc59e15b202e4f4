#pragma once

#include "etchpit/kernels.hpp"
#include "etchpit/matrix.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

/// Reduction of feature vectors to a low-dimensional latent space.
namespace etchpit::embed {

enum class Method { Umap, Pca, Tsne };
std::string to_string(Method m);
Method parse_method(const std::string& s);

struct EmbeddingConfig {
    Method method = Method::Umap;
    int n_components = 3;
    int n_neighbors = 10;  // includes the point itself, as in umap-learn
    double min_dist = 0.3;
    double spread = 1.0;
    std::uint64_t seed = 32;
    int n_epochs = 200;
    double learning_rate = 1.0;
    int negative_sample_rate = 5;
    double perplexity = 30.0;
    int tsne_iterations = 500;
};

struct Embedding {
    Matrix coords;                 // N x n_components
    std::vector<std::size_t> source_index;
    std::vector<std::string> ids;  // optional
    EmbeddingConfig config;
    std::vector<std::string> warnings;

    std::size_t size() const { return coords.rows(); }
};

// ---- PCA ------------------------------------------------------------------

struct PcaModel {
    std::vector<double> mean;
    Matrix components;                    // k x D, orthonormal rows
    std::vector<double> explained_variance;
};

/// Top-k principal directions, decreasing variance; each component's
/// largest-magnitude loading is made positive.
PcaModel fit_pca(const Matrix& x, int k);
Matrix project(const PcaModel& model, const Matrix& x);
Embedding reduce_pca(const Matrix& x, int k = 3);

// ---- UMAP -----------------------------------------------------------------

struct CurveParams {
    double a = 1.0;
    double b = 1.0;
};

/// Least-squares fit of 1/(1+a d^2b) to the min_dist/spread target curve.
CurveParams fit_ab(double min_dist, double spread = 1.0);

struct SmoothKnn {
    std::vector<double> sigma;
    std::vector<double> rho;
    std::vector<double> residual;  // |sum - log2(k)| per point
};

/// Per-point bandwidth such that sum_j exp(-max(0, d_ij - rho_i)/sigma_i) = log2(n_neighbors),
/// summed over the n_neighbors-1 nearest other points.
SmoothKnn smooth_knn(const kernels::KnnGraph& g, int n_neighbors);

struct Edge {
    std::uint32_t i = 0;
    std::uint32_t j = 0;
    double w = 0.0;
};

/// Directed memberships fuzzy-unioned into a symmetric graph (both
/// directions listed, sorted by (i,j)).
std::vector<Edge> fuzzy_graph(const kernels::KnnGraph& g, const SmoothKnn& s);

/// Eigenvectors 1..dim of the symmetric normalized Laplacian.
Matrix spectral_layout(std::size_t n, const std::vector<Edge>& edges, int dim, std::uint64_t seed);

/// Per-edge terms of the fuzzy cross-entropy and their gradient with respect
/// to the first endpoint (no regularizing epsilon).
double attractive_loss(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab);
double repulsive_loss(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab);
std::vector<double> attractive_grad(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab);
std::vector<double> repulsive_grad(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab);

struct UmapResult {
    Embedding embedding;
    CurveParams ab;
    SmoothKnn calibration;
    std::vector<Edge> graph;
};

UmapResult fit_umap(const Matrix& x, const EmbeddingConfig& config);
Embedding reduce_umap(const Matrix& x, const EmbeddingConfig& config);

/// Places new points at the membership-weighted mean of their nearest
/// reference points' coordinates.
Matrix umap_transform(const Matrix& reference, const Matrix& reference_coords, const Matrix& x, int n_neighbors);

// ---- t-SNE ----------------------------------------------------------------

struct TsneResult {
    Embedding embedding;
    std::vector<double> kl_history;  // every 10 iterations
    std::vector<int> kl_iteration;
};

TsneResult fit_tsne(const Matrix& x, const EmbeddingConfig& config);
Embedding reduce_tsne(const Matrix& x, double perplexity, std::uint64_t seed, int n_components = 3);

// ---- common ---------------------------------------------------------------

/// Dispatch on config.method.
Embedding reduce(const Matrix& x, const EmbeddingConfig& config);

/// Per-component min-max scaling to [0,1]; constant components become 0.5.
Embedding scale_components(const Embedding& e);

/// CSV with header patch_id,c1..ck; values at round-trip precision.
void write_embedding_csv(const std::filesystem::path& path, const Embedding& e);
Embedding read_embedding_csv(const std::filesystem::path& path);

}  // namespace etchpit::embed
