#include "etchpit/embed.hpp"

#include "etchpit/error.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

namespace etchpit::embed {

namespace {

constexpr double kTolerance = 1e-5;
constexpr int kBisectionSteps = 128;
constexpr double kMinKDistScale = 1e-3;

struct Calibration {
    double sigma = 1.0;
    double rho = 0.0;
    double residual = 0.0;
};

double membership_sum(std::span<const double> d, double rho, double sigma)
{
    double s = 0.0;
    for (double v : d) {
        const double t = v - rho;
        s += t > 0 ? std::exp(-t / sigma) : 1.0;
    }
    return s;
}

// `d` holds the distances to the nearest other points, ascending.
Calibration calibrate(std::span<const double> d, double target, double mean_all)
{
    Calibration c;
    for (double v : d)
        if (v > 0) {
            c.rho = v;
            break;
        }
    double lo = 0.0, hi = std::numeric_limits<double>::infinity(), mid = 1.0;
    for (int it = 0; it < kBisectionSteps; ++it) {
        const double s = membership_sum(d, c.rho, mid);
        if (std::abs(s - target) < kTolerance) break;
        if (s > target) {
            hi = mid;
            mid = (lo + hi) / 2.0;
        } else {
            lo = mid;
            mid = std::isinf(hi) ? mid * 2.0 : (lo + hi) / 2.0;
        }
    }
    c.sigma = mid;
    const double mean_i = d.empty() ? 0.0 : std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
    const double floor = kMinKDistScale * (c.rho > 0 ? mean_i : mean_all);
    if (c.sigma < floor) c.sigma = floor;
    if (c.sigma <= 0) c.sigma = 1.0;  // every distance is zero
    c.residual = std::abs(membership_sum(d, c.rho, c.sigma) - target);
    return c;
}

double clip4(double v) { return std::clamp(v, -4.0, 4.0); }

void fix_sign(Eigen::Ref<Eigen::VectorXd> v)
{
    Eigen::Index arg = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(arg)) + 1e-12) arg = i;
    if (v(arg) < 0) v *= -1.0;
}

}  // namespace

CurveParams fit_ab(double min_dist, double spread)
{
    if (!(spread > 0) || min_dist < 0) throw PreconditionError("fit_ab needs spread > 0 and min_dist >= 0");
    constexpr int n = 300;
    std::vector<double> xs(n), ys(n);
    for (int i = 0; i < n; ++i) {
        xs[i] = spread * 3.0 * i / (n - 1);
        ys[i] = xs[i] < min_dist ? 1.0 : std::exp(-(xs[i] - min_dist) / spread);
    }
    auto cost = [&](double a, double b) {
        double s = 0.0;
        for (int i = 0; i < n; ++i) {
            const double r = 1.0 / (1.0 + a * std::pow(xs[i], 2 * b)) - ys[i];
            s += r * r;
        }
        return s;
    };
    // Levenberg-Marquardt on two parameters.
    double a = 1.0, b = 1.0, mu = 1e-3;
    double c = cost(a, b);
    for (int it = 0; it < 500; ++it) {
        double jtj[2][2] = {}, jtr[2] = {};
        for (int i = 0; i < n; ++i) {
            const double x = xs[i];
            const double p = x > 0 ? std::pow(x, 2 * b) : 0.0;
            const double f = 1.0 / (1.0 + a * p);
            const double r = f - ys[i];
            const double ja = -p * f * f;
            const double jb = x > 0 ? -a * p * 2.0 * std::log(x) * f * f : 0.0;
            jtj[0][0] += ja * ja;
            jtj[0][1] += ja * jb;
            jtj[1][1] += jb * jb;
            jtr[0] += ja * r;
            jtr[1] += jb * r;
        }
        bool improved = false;
        for (int tries = 0; tries < 30 && !improved; ++tries) {
            const double m00 = jtj[0][0] * (1 + mu), m11 = jtj[1][1] * (1 + mu), m01 = jtj[0][1];
            const double det = m00 * m11 - m01 * m01;
            if (det == 0) break;
            const double da = -(m11 * jtr[0] - m01 * jtr[1]) / det;
            const double db = -(-m01 * jtr[0] + m00 * jtr[1]) / det;
            const double nc = cost(a + da, b + db);
            if (nc < c) {
                const bool tiny = std::abs(da) < 1e-14 * (1 + std::abs(a)) && std::abs(db) < 1e-14 * (1 + std::abs(b));
                a += da;
                b += db;
                c = nc;
                mu = std::max(mu / 10, 1e-12);
                improved = true;
                if (tiny) return {a, b};
            } else {
                mu *= 10;
            }
        }
        if (!improved) break;
    }
    return {a, b};
}

SmoothKnn smooth_knn(const kernels::KnnGraph& g, int n_neighbors)
{
    SmoothKnn s;
    s.sigma.resize(g.n);
    s.rho.resize(g.n);
    s.residual.resize(g.n);
    const double target = std::log2(static_cast<double>(n_neighbors));
    const double mean_all = g.distances.empty()
                                ? 0.0
                                : std::accumulate(g.distances.begin(), g.distances.end(), 0.0) /
                                      static_cast<double>(g.distances.size());
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(g.n); ++i) {
        const Calibration c = calibrate(g.dists(i), target, mean_all);
        s.sigma[i] = c.sigma;
        s.rho[i] = c.rho;
        s.residual[i] = c.residual;
    }
    return s;
}

std::vector<Edge> fuzzy_graph(const kernels::KnnGraph& g, const SmoothKnn& s)
{
    std::vector<Edge> directed;
    directed.reserve(g.n * g.k);
    for (std::size_t i = 0; i < g.n; ++i) {
        const auto nb = g.neighbors(i);
        const auto d = g.dists(i);
        for (std::size_t t = 0; t < g.k; ++t) {
            const double x = d[t] - s.rho[i];
            const double w = x > 0 ? std::exp(-x / s.sigma[i]) : 1.0;
            directed.push_back({static_cast<std::uint32_t>(i), nb[t], w});
        }
    }
    // Pair each edge with its transpose: w = a + b - ab, evaluated as hi + lo(1 - hi)
    // so the result is symmetric and a membership of 1 stays exactly 1.
    std::vector<Edge> both = directed;
    for (const Edge& e : directed) both.push_back({e.j, e.i, e.w});
    std::sort(both.begin(), both.end(), [](const Edge& x, const Edge& y) {
        return x.i != y.i ? x.i < y.i : x.j < y.j;
    });
    std::vector<Edge> out;
    for (std::size_t p = 0; p < both.size();) {
        std::size_t q = p;
        double a = 0.0, b = 0.0;
        int count = 0;
        while (q < both.size() && both[q].i == both[p].i && both[q].j == both[p].j) {
            (count == 0 ? a : b) = both[q].w;
            ++count;
            ++q;
        }
        // count == 1: only one direction exists, the other membership is 0.
        out.push_back({both[p].i, both[p].j, count == 1 ? a : std::max(a, b) + std::min(a, b) * (1.0 - std::max(a, b))});
        p = q;
    }
    return out;
}

Matrix spectral_layout(std::size_t n, const std::vector<Edge>& edges, int dim, std::uint64_t seed)
{
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::VectorXd deg = Eigen::VectorXd::Zero(N);
    for (const Edge& e : edges) deg(e.i) += e.w;
    Eigen::VectorXd dinv(N);
    for (Eigen::Index i = 0; i < N; ++i) dinv(i) = deg(i) > 0 ? 1.0 / std::sqrt(deg(i)) : 0.0;

    Eigen::MatrixXd vecs(N, dim);
    if (n <= 2500) {
        Eigen::MatrixXd lap = Eigen::MatrixXd::Identity(N, N);
        for (const Edge& e : edges) lap(e.i, e.j) -= e.w * dinv(e.i) * dinv(e.j);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(lap);
        vecs = es.eigenvectors().middleCols(1, dim);
    } else {
        // Subspace iteration on I + D^-1/2 W D^-1/2, whose top eigenvectors are
        // the Laplacian's bottom ones.
        const int m = dim + 1;
        std::mt19937_64 rng(seed);
        std::normal_distribution<double> nd(0.0, 1.0);
        Eigen::MatrixXd q(N, m);
        for (Eigen::Index i = 0; i < N; ++i)
            for (int c = 0; c < m; ++c) q(i, c) = nd(rng);
        auto apply = [&](const Eigen::MatrixXd& v) {
            Eigen::MatrixXd out = v;
            for (const Edge& e : edges) out.row(e.i) += e.w * dinv(e.i) * dinv(e.j) * v.row(e.j);
            return out;
        };
        for (int it = 0; it < 300; ++it) {
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(apply(q));
            q = qr.householderQ() * Eigen::MatrixXd::Identity(N, m);
        }
        const Eigen::MatrixXd small = q.transpose() * apply(q);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(small);
        const Eigen::MatrixXd ritz = q * es.eigenvectors();  // ascending in I+M
        for (int c = 0; c < dim; ++c) vecs.col(c) = ritz.col(m - 2 - c);
    }
    Matrix out(n, static_cast<std::size_t>(dim));
    for (int c = 0; c < dim; ++c) {
        Eigen::VectorXd v = vecs.col(c);
        fix_sign(v);
        for (Eigen::Index i = 0; i < N; ++i) out(i, c) = v(i);
    }
    return out;
}

double attractive_loss(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab)
{
    const double d2 = squared_distance(yi, yj);
    return std::log1p(ab.a * std::pow(d2, ab.b));  // -log q
}

double repulsive_loss(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab)
{
    const double d2 = squared_distance(yi, yj);
    const double t = ab.a * std::pow(d2, ab.b);
    return -std::log(t / (1.0 + t));  // -log(1 - q)
}

namespace {

// d(loss)/d(yi) = coeff * (yi - yj). The SGD below uses the same factors;
// its repulsive term adds a small epsilon to d2 as umap-learn does.
double attractive_coeff(double d2, double a, double b)
{
    return 2.0 * a * b * std::pow(d2, b - 1.0) / (1.0 + a * std::pow(d2, b));
}

double repulsive_coeff(double d2, double a, double b, double eps)
{
    return -2.0 * b / ((eps + d2) * (1.0 + a * std::pow(d2, b)));
}

}  // namespace

std::vector<double> attractive_grad(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab)
{
    const double d2 = squared_distance(yi, yj);
    std::vector<double> g(yi.size(), 0.0);
    if (d2 <= 0) return g;
    const double coeff = attractive_coeff(d2, ab.a, ab.b);
    for (std::size_t c = 0; c < yi.size(); ++c) g[c] = coeff * (yi[c] - yj[c]);
    return g;
}

std::vector<double> repulsive_grad(std::span<const double> yi, std::span<const double> yj, const CurveParams& ab)
{
    const double d2 = squared_distance(yi, yj);
    std::vector<double> g(yi.size(), 0.0);
    if (d2 <= 0) return g;
    const double coeff = repulsive_coeff(d2, ab.a, ab.b, 0.0);
    for (std::size_t c = 0; c < yi.size(); ++c) g[c] = coeff * (yi[c] - yj[c]);
    return g;
}

UmapResult fit_umap(const Matrix& x, const EmbeddingConfig& cfg)
{
    const std::size_t n = x.rows();
    if (cfg.n_neighbors < 2) throw PreconditionError("n_neighbors must be >= 2");
    if (n <= static_cast<std::size_t>(cfg.n_neighbors) - 1 || n < 3)
        throw PreconditionError("UMAP needs more points (" + std::to_string(n) + ") than n_neighbors - 1 (" +
                                std::to_string(cfg.n_neighbors - 1) + ")");
    if (cfg.n_components < 1) throw PreconditionError("n_components must be >= 1");
    const auto dim = static_cast<std::size_t>(cfg.n_components);

    UmapResult r;
    r.ab = fit_ab(cfg.min_dist, cfg.spread);
    const kernels::KnnGraph g = kernels::parallel::knn(x, static_cast<std::size_t>(cfg.n_neighbors - 1));
    r.calibration = smooth_knn(g, cfg.n_neighbors);
    r.graph = fuzzy_graph(g, r.calibration);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1e-4);

    Matrix y;
    if (n > dim + 1) {
        y = spectral_layout(n, r.graph, cfg.n_components, cfg.seed);
        double amax = 0.0;
        for (double v : y.data()) amax = std::max(amax, std::abs(v));
        const double expansion = amax > 0 ? 10.0 / amax : 1.0;
        for (double& v : y.data()) v = v * expansion + noise(rng);
    } else {
        y = Matrix(n, dim);
        std::uniform_real_distribution<double> u(-10.0, 10.0);
        for (double& v : y.data()) v = u(rng);
    }
    for (std::size_t c = 0; c < dim; ++c) {
        double lo = y(0, c), hi = y(0, c);
        for (std::size_t i = 1; i < n; ++i) {
            lo = std::min(lo, y(i, c));
            hi = std::max(hi, y(i, c));
        }
        const double span = hi - lo;
        for (std::size_t i = 0; i < n; ++i) y(i, c) = span > 0 ? 10.0 * (y(i, c) - lo) / span : 0.0;
    }

    // Sampling schedule.
    double wmax = 0.0;
    for (const Edge& e : r.graph) wmax = std::max(wmax, e.w);
    std::vector<Edge> edges;
    for (const Edge& e : r.graph)
        if (e.w >= wmax / cfg.n_epochs) edges.push_back(e);
    const std::size_t m = edges.size();
    std::vector<double> eps(m), next(m), eps_neg(m), next_neg(m);
    for (std::size_t p = 0; p < m; ++p) {
        eps[p] = wmax / edges[p].w;
        next[p] = eps[p];
        eps_neg[p] = eps[p] / cfg.negative_sample_rate;
        next_neg[p] = eps_neg[p];
    }

    const double a = r.ab.a, b = r.ab.b;
    std::vector<double> grad(dim);
    for (int epoch = 0; epoch < cfg.n_epochs; ++epoch) {
        const double alpha = cfg.learning_rate * (1.0 - static_cast<double>(epoch) / cfg.n_epochs);
        for (std::size_t p = 0; p < m; ++p) {
            if (next[p] > epoch) continue;
            const std::size_t i = edges[p].i, j = edges[p].j;
            auto yi = y.row(i);
            auto yj = y.row(j);
            double d2 = squared_distance(yi, yj);
            if (d2 > 0) {
                const double coeff = attractive_coeff(d2, a, b);
                for (std::size_t c = 0; c < dim; ++c) {
                    const double gd = clip4(-coeff * (yi[c] - yj[c]));
                    yi[c] += gd * alpha;
                    yj[c] -= gd * alpha;
                }
            }
            next[p] += eps[p];

            const auto n_neg = static_cast<int>((epoch - next_neg[p]) / eps_neg[p]);
            for (int s = 0; s < n_neg; ++s) {
                const std::size_t k = static_cast<std::size_t>(rng() % n);
                if (k == i) continue;
                auto yk = y.row(k);
                d2 = squared_distance(yi, yk);
                for (std::size_t c = 0; c < dim; ++c) {
                    double gd = 4.0;
                    if (d2 > 0) {
                        gd = clip4(-repulsive_coeff(d2, a, b, 0.001) * (yi[c] - yk[c]));
                    }
                    yi[c] += gd * alpha;
                }
            }
            next_neg[p] += n_neg * eps_neg[p];
        }
    }

    r.embedding.coords = std::move(y);
    r.embedding.config = cfg;
    r.embedding.config.method = Method::Umap;
    r.embedding.source_index.resize(n);
    std::iota(r.embedding.source_index.begin(), r.embedding.source_index.end(), std::size_t{0});
    for (const Edge& e : r.graph)
        if (!std::isfinite(e.w)) throw Error("non-finite graph weight");
    return r;
}

Embedding reduce_umap(const Matrix& x, const EmbeddingConfig& config) { return fit_umap(x, config).embedding; }

Matrix umap_transform(const Matrix& reference, const Matrix& ref_coords, const Matrix& x, int n_neighbors)
{
    if (reference.rows() != ref_coords.rows()) throw PreconditionError("reference and coordinates differ in length");
    if (reference.cols() != x.cols()) throw PreconditionError("feature dimension differs from the reference");
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(n_neighbors), reference.rows());
    const std::size_t dim = ref_coords.cols();
    const double target = std::log2(static_cast<double>(std::max<std::size_t>(k, 2)));
    Matrix out(x.rows(), dim);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::vector<std::pair<double, std::uint32_t>> d(reference.rows());
        for (std::size_t r = 0; r < reference.rows(); ++r)
            d[r] = {squared_distance(x.row(i), reference.row(r)), static_cast<std::uint32_t>(r)};
        std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
        std::vector<double> dist(k);
        for (std::size_t t = 0; t < k; ++t) dist[t] = std::sqrt(d[t].first);
        const Calibration c = calibrate(dist, target, 0.0);
        double wsum = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            const double z = dist[t] - c.rho;
            const double w = z > 0 ? std::exp(-z / c.sigma) : 1.0;
            wsum += w;
            for (std::size_t col = 0; col < dim; ++col) out(i, col) += w * ref_coords(d[t].second, col);
        }
        for (std::size_t col = 0; col < dim; ++col) out(i, col) /= wsum;
    }
    return out;
}

}  // namespace etchpit::embed
