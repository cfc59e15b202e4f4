#include "etchpit/embed.hpp"

#include "etchpit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace etchpit::embed {

namespace {

constexpr double kExaggeration = 12.0;
constexpr int kExaggerationIters = 50;
constexpr double kTiny = 1e-12;

// Row-conditional Gaussian affinities at the requested perplexity.
std::vector<double> conditional_p(const std::vector<double>& d2, std::size_t n, double perplexity)
{
    std::vector<double> p(n * n, 0.0);
    const double target = std::log(perplexity);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        double beta = 1.0, lo = 0.0, hi = std::numeric_limits<double>::infinity();
        std::vector<double> row(n, 0.0);
        for (int it = 0; it < 200; ++it) {
            double sum = 0.0, dsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i) {
                    row[j] = 0.0;
                    continue;
                }
                row[j] = std::exp(-d2[i * n + j] * beta);
                sum += row[j];
                dsum += d2[i * n + j] * row[j];
            }
            if (sum <= 0) sum = kTiny;
            const double h = std::log(sum) + beta * dsum / sum;
            const double diff = h - target;
            if (std::abs(diff) < 1e-5) break;
            if (diff > 0) {
                lo = beta;
                beta = std::isinf(hi) ? beta * 2.0 : (beta + hi) / 2.0;
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        double sum = std::accumulate(row.begin(), row.end(), 0.0);
        if (sum <= 0) sum = kTiny;
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] = row[j] / sum;
    }
    return p;
}

double kl_divergence(const std::vector<double>& p, const Matrix& y)
{
    const std::size_t n = y.rows();
    double z = 0.0;
    std::vector<double> num(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double q = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
            num[i * n + j] = num[j * n + i] = q;
            z += 2.0 * q;
        }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j || p[i * n + j] <= 0) continue;
            const double q = std::max(num[i * n + j] / z, kTiny);
            kl += p[i * n + j] * std::log(p[i * n + j] / q);
        }
    return kl;
}

}  // namespace

TsneResult fit_tsne(const Matrix& x, const EmbeddingConfig& cfg)
{
    const std::size_t n = x.rows();
    if (!(cfg.perplexity > 0) || 3.0 * cfg.perplexity >= static_cast<double>(n))
        throw PreconditionError("t-SNE needs 3 * perplexity < N (perplexity " + std::to_string(cfg.perplexity) +
                                ", N " + std::to_string(n) + ")");
    const auto dim = static_cast<std::size_t>(cfg.n_components);

    std::vector<double> d2(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) d2[i * n + j] = d2[j * n + i] = squared_distance(x.row(i), x.row(j));

    const std::vector<double> cond = conditional_p(d2, n, cfg.perplexity);
    std::vector<double> p(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            p[i * n + j] = std::max((cond[i * n + j] + cond[j * n + i]) / (2.0 * static_cast<double>(n)), kTiny);
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] = 0.0;

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> init(0.0, 1e-4);
    Matrix y(n, dim);
    for (double& v : y.data()) v = init(rng);

    const double lr = std::max(static_cast<double>(n) / kExaggeration / 4.0, 50.0);
    Matrix update(n, dim), gains(n, dim, 1.0), grad(n, dim);
    std::vector<double> num(n * n);

    TsneResult r;
    for (int it = 0; it < cfg.tsne_iterations; ++it) {
        const double exag = it < kExaggerationIters ? kExaggeration : 1.0;
        const double momentum = it < kExaggerationIters ? 0.5 : 0.8;
        double z = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) {
                const double q = 1.0 / (1.0 + squared_distance(y.row(i), y.row(j)));
                num[i * n + j] = num[j * n + i] = q;
                z += 2.0 * q;
            }
        std::fill(grad.data().begin(), grad.data().end(), 0.0);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = std::max(num[i * n + j] / z, kTiny);
                const double f = 4.0 * (exag * p[i * n + j] - q) * num[i * n + j];
                for (std::size_t c = 0; c < dim; ++c) grad(i, c) += f * (y(i, c) - y(j, c));
            }
        for (std::size_t k = 0; k < y.data().size(); ++k) {
            double& g = gains.data()[k];
            const double gr = grad.data()[k];
            double& u = update.data()[k];
            g = (gr > 0) != (u > 0) ? g + 0.2 : g * 0.8;
            g = std::max(g, 0.01);
            u = momentum * u - lr * g * gr;
            y.data()[k] += u;
        }
        if ((it + 1) % 10 == 0) {
            r.kl_history.push_back(kl_divergence(p, y));
            r.kl_iteration.push_back(it + 1);
        }
    }
    r.embedding.coords = std::move(y);
    r.embedding.config = cfg;
    r.embedding.config.method = Method::Tsne;
    r.embedding.source_index.resize(n);
    std::iota(r.embedding.source_index.begin(), r.embedding.source_index.end(), std::size_t{0});
    return r;
}

Embedding reduce_tsne(const Matrix& x, double perplexity, std::uint64_t seed, int n_components)
{
    EmbeddingConfig cfg;
    cfg.method = Method::Tsne;
    cfg.perplexity = perplexity;
    cfg.seed = seed;
    cfg.n_components = n_components;
    return fit_tsne(x, cfg).embedding;
}

}  // namespace etchpit::embed
