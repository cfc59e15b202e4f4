#include "etchpit/embed.hpp"

#include "etchpit/error.hpp"

#include <Eigen/Dense>

#include <cmath>

namespace etchpit::embed {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

Eigen::Map<const RowMat> view(const Matrix& x)
{
    return Eigen::Map<const RowMat>(x.data().data(), static_cast<Eigen::Index>(x.rows()),
                                    static_cast<Eigen::Index>(x.cols()));
}

}  // namespace

std::string to_string(Method m)
{
    switch (m) {
    case Method::Umap: return "umap";
    case Method::Pca: return "pca";
    case Method::Tsne: return "tsne";
    }
    return "?";
}

Method parse_method(const std::string& s)
{
    if (s == "umap") return Method::Umap;
    if (s == "pca") return Method::Pca;
    if (s == "tsne") return Method::Tsne;
    throw ConfigError("unknown embedding method '" + s + "' (expected umap, pca or tsne)");
}

PcaModel fit_pca(const Matrix& x, int k)
{
    const auto n = static_cast<Eigen::Index>(x.rows());
    const auto d = static_cast<Eigen::Index>(x.cols());
    if (k < 1 || n < k) throw PreconditionError("PCA needs 1 <= k <= N");
    if (k > d) throw PreconditionError("PCA needs k <= dimension");

    const Eigen::RowVectorXd mean = view(x).colwise().mean();
    const Eigen::MatrixXd xc = view(x).rowwise() - mean;

    PcaModel m;
    m.mean.assign(mean.data(), mean.data() + d);
    m.components = Matrix(static_cast<std::size_t>(k), static_cast<std::size_t>(d));
    m.explained_variance.assign(static_cast<std::size_t>(k), 0.0);

    Eigen::MatrixXd dirs(d, k);
    if (d <= n) {
        const Eigen::MatrixXd cov = (xc.transpose() * xc) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
        for (int c = 0; c < k; ++c) {
            dirs.col(c) = es.eigenvectors().col(d - 1 - c);
            m.explained_variance[c] = std::max(0.0, es.eigenvalues()(d - 1 - c));
        }
    } else {
        // Few samples in many dimensions: eigenvectors of the Gram matrix.
        const Eigen::MatrixXd gram = (xc * xc.transpose()) / static_cast<double>(n);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
        for (int c = 0; c < k; ++c) {
            const double lambda = std::max(0.0, es.eigenvalues()(n - 1 - c));
            m.explained_variance[c] = lambda;
            Eigen::VectorXd v = xc.transpose() * es.eigenvectors().col(n - 1 - c);
            const double norm = v.norm();
            dirs.col(c) = norm > 0 ? Eigen::VectorXd(v / norm) : Eigen::VectorXd::Zero(d);
        }
    }

    for (int c = 0; c < k; ++c) {
        Eigen::Index arg = 0;
        for (Eigen::Index j = 1; j < d; ++j)
            if (std::abs(dirs(j, c)) > std::abs(dirs(arg, c)) + 1e-12) arg = j;
        if (dirs(arg, c) < 0) dirs.col(c) *= -1.0;
        for (Eigen::Index j = 0; j < d; ++j) m.components(c, j) = dirs(j, c);
    }
    return m;
}

Matrix project(const PcaModel& model, const Matrix& x)
{
    const std::size_t k = model.components.rows();
    Matrix out(x.rows(), k);
    for (std::size_t i = 0; i < x.rows(); ++i) {
        for (std::size_t c = 0; c < k; ++c) {
            double s = 0.0;
            for (std::size_t j = 0; j < x.cols(); ++j) s += (x(i, j) - model.mean[j]) * model.components(c, j);
            out(i, c) = s;
        }
    }
    return out;
}

Embedding reduce_pca(const Matrix& x, int k)
{
    Embedding e;
    e.config.method = Method::Pca;
    e.config.n_components = k;
    const PcaModel m = fit_pca(x, k);
    double total = 0.0;
    for (double v : m.explained_variance) total += v;
    if (total <= 0.0) {
        e.coords = Matrix(x.rows(), static_cast<std::size_t>(k));
        e.warnings.push_back("zero-variance input; embedding is all zeros");
    } else {
        e.coords = project(m, x);
    }
    e.source_index.resize(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) e.source_index[i] = i;
    return e;
}

}  // namespace etchpit::embed
