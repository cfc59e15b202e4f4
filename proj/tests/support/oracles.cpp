#include "oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <cmath>
#include <functional>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>

namespace etchpit::oracle {

namespace {

struct Dsu {
    std::vector<std::size_t> p;
    explicit Dsu(std::size_t n) : p(n) { std::iota(p.begin(), p.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) { return p[x] == x ? x : p[x] = find(p[x]); }
    bool unite(std::size_t a, std::size_t b)
    {
        a = find(a);
        b = find(b);
        if (a == b) return false;
        p[b] = a;
        return true;
    }
};

struct WEdge {
    double w;
    std::size_t a, b;
};

std::vector<WEdge> sorted_edges(const Matrix& d)
{
    std::vector<WEdge> e;
    for (std::size_t i = 0; i < d.rows(); ++i)
        for (std::size_t j = i + 1; j < d.rows(); ++j) e.push_back({d(i, j), i, j});
    std::sort(e.begin(), e.end(), [](const WEdge& x, const WEdge& y) { return x.w < y.w; });
    return e;
}

double lambda(double w) { return 1.0 / std::max(w, 1e-10); }

}  // namespace

double convex_perimeter(const BinaryMask& m)
{
    // Row runs [l, r], top to bottom. Each side steps once per row pair, plus
    // a horizontal walk when consecutive run ends are more than one pixel apart.
    std::vector<std::pair<int, int>> runs;
    for (int y = 0; y < m.height(); ++y) {
        int l = -1, r = -1, pieces = 0;
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) {
                if (l < 0 || !m.get(x - 1, y)) ++pieces;
                if (l < 0) l = x;
                r = x;
            }
        if (l < 0) {
            if (!runs.empty()) runs.push_back({-1, -1});
            continue;
        }
        if (pieces != 1) return -1.0;
        runs.push_back({l, r});
    }
    while (!runs.empty() && runs.back().first < 0) runs.pop_back();
    if (runs.empty()) return -1.0;
    auto side = [](int a, int b) {
        const int d = std::abs(a - b);
        return d == 0 ? 1.0 : (d - 1) + std::sqrt(2.0);
    };
    double len = (runs.front().second - runs.front().first) + (runs.back().second - runs.back().first);
    for (std::size_t i = 0; i + 1 < runs.size(); ++i) {
        const auto [l0, r0] = runs[i];
        const auto [l1, r1] = runs[i + 1];
        // A gap row, or runs that do not touch even diagonally, is outside the oracle's range.
        if (l0 < 0 || l1 < 0 || l1 > r0 + 1 || l0 > r1 + 1) return -1.0;
        len += side(l0, l1) + side(r0, r1);
    }
    return len;
}

Descriptors descriptors(const BinaryMask& m)
{
    Eigen::Vector2d mean = Eigen::Vector2d::Zero();
    double n = 0;
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) {
                mean += Eigen::Vector2d(x, y);
                n += 1;
            }
    mean /= n;
    Eigen::Matrix2d cov = Eigen::Matrix2d::Zero();
    for (int y = 0; y < m.height(); ++y)
        for (int x = 0; x < m.width(); ++x)
            if (m.get(x, y)) {
                const Eigen::Vector2d d = Eigen::Vector2d(x, y) - mean;
                cov += d * d.transpose();
            }
    cov /= n;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(cov);
    Descriptors out;
    out.major = 4.0 * std::sqrt(es.eigenvalues()(1));
    out.minor = 4.0 * std::sqrt(std::max(0.0, es.eigenvalues()(0)));
    out.lengthiness = out.major / out.minor;
    out.compactness = n / (std::numbers::pi * out.major * out.minor / 4.0);
    out.perimeter = convex_perimeter(m);
    out.circularity = 4.0 * std::numbers::pi * n / (out.perimeter * out.perimeter);
    return out;
}

double min_spanning_weight_bnb(const Matrix& dist)
{
    const std::size_t n = dist.rows();
    if (n < 2) return 0.0;
    const auto edges = sorted_edges(dist);
    double best = std::numeric_limits<double>::infinity();
    std::function<void(std::size_t, std::size_t, double, Dsu)> go = [&](std::size_t idx, std::size_t have, double w,
                                                                         Dsu dsu) {
        const std::size_t need = n - 1 - have;
        if (need == 0) {
            best = std::min(best, w);
            return;
        }
        if (edges.size() - idx < need) return;
        double bound = w;
        for (std::size_t k = 0; k < need; ++k) bound += edges[idx + k].w;
        if (bound >= best) return;
        const auto& e = edges[idx];
        Dsu with = dsu;
        if (with.unite(e.a, e.b)) go(idx + 1, have + 1, w + e.w, std::move(with));
        go(idx + 1, have, w, std::move(dsu));
    };
    go(0, 0, 0.0, Dsu(n));
    return best;
}

double min_spanning_weight_pruefer(const Matrix& dist)
{
    const std::size_t n = dist.rows();
    if (n < 2) return 0.0;
    if (n == 2) return dist(0, 1);
    if (n > 9) throw std::invalid_argument("Pruefer enumeration is limited to 9 points");
    const std::size_t len = n - 2;
    std::vector<std::size_t> seq(len, 0);
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> degree(n);
    while (true) {
        std::fill(degree.begin(), degree.end(), 1);
        for (std::size_t s : seq) ++degree[s];
        double w = 0.0;
        for (std::size_t s : seq) {
            std::size_t leaf = 0;
            while (degree[leaf] != 1) ++leaf;
            w += dist(leaf, s);
            --degree[leaf];
            --degree[s];
        }
        std::size_t u = n, v = n;
        for (std::size_t i = 0; i < n; ++i)
            if (degree[i] == 1) (u == n ? u : v) = i;
        w += dist(u, v);
        best = std::min(best, w);

        std::size_t k = 0;
        while (k < len && ++seq[k] == n) seq[k++] = 0;
        if (k == len) break;
    }
    return best;
}

Matrix mutual_reachability(const Matrix& x, int min_samples)
{
    const std::size_t n = x.rows();
    Matrix d(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0;
            for (std::size_t c = 0; c < x.cols(); ++c) s += (x(i, c) - x(j, c)) * (x(i, c) - x(j, c));
            d(i, j) = std::sqrt(s);
        }
    std::vector<double> core(n, 0.0);
    for (std::size_t i = 0; i < n && n > 1; ++i) {
        std::vector<double> others;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) others.push_back(d(i, j));
        std::sort(others.begin(), others.end());
        core[i] = others[std::min<std::size_t>(static_cast<std::size_t>(min_samples), others.size()) - 1];
    }
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j) m(i, j) = std::max({core[i], core[j], d(i, j)});
    return m;
}

std::vector<int> hdbscan_labels(const Matrix& mreach, int min_cluster_size)
{
    const std::size_t n = mreach.rows();
    const auto mcs = static_cast<std::size_t>(min_cluster_size);
    std::vector<double> levels;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) levels.push_back(mreach(i, j));
    std::sort(levels.begin(), levels.end(), std::greater<>());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    if (levels.empty() || levels.front() == 0.0) return std::vector<int>(n, levels.empty() ? -1 : 0);

    struct C {
        std::vector<std::size_t> members;
        double birth = 0.0;
        std::vector<std::size_t> children;
        std::vector<double> exit;  // per member, lambda at which it left this cluster
        double stability = 0.0;
        bool selected = false;
    };
    std::vector<C> cs;

    auto components = [&](const std::vector<std::size_t>& set, double w) {
        Dsu dsu(n);
        for (std::size_t a : set)
            for (std::size_t b : set)
                if (a < b && mreach(a, b) < w) dsu.unite(a, b);
        std::vector<std::vector<std::size_t>> out;
        std::vector<std::size_t> root_of;
        for (std::size_t a : set) {
            const std::size_t r = dsu.find(a);
            auto it = std::find(root_of.begin(), root_of.end(), r);
            if (it == root_of.end()) {
                root_of.push_back(r);
                out.push_back({a});
            } else {
                out[static_cast<std::size_t>(it - root_of.begin())].push_back(a);
            }
        }
        return out;
    };

    std::function<void(std::size_t, std::size_t)> grow = [&](std::size_t c, std::size_t start) {
        std::vector<double> exit_of(n, -1.0);
        std::vector<std::size_t> current = cs[c].members;
        for (std::size_t l = start; l < levels.size(); ++l) {
            const double lam = lambda(levels[l]);
            std::vector<std::vector<std::size_t>> big;
            for (auto& comp : components(current, levels[l])) {
                if (comp.size() >= mcs) big.push_back(std::move(comp));
                else
                    for (std::size_t p : comp) exit_of[p] = lam;
            }
            if (big.size() >= 2) {
                for (auto& b : big) {
                    for (std::size_t p : b) exit_of[p] = lam;
                    C child;
                    child.members = std::move(b);
                    child.birth = lam;
                    cs.push_back(std::move(child));
                    const std::size_t id = cs.size() - 1;
                    cs[c].children.push_back(id);
                    grow(id, l + 1);
                }
                break;
            }
            if (big.empty()) break;
            current = std::move(big.front());
        }
        for (std::size_t p : cs[c].members) {
            cs[c].exit.push_back(exit_of[p]);
            cs[c].stability += exit_of[p] - cs[c].birth;
        }
    };

    C root;
    root.members.resize(n);
    std::iota(root.members.begin(), root.members.end(), std::size_t{0});
    cs.push_back(std::move(root));
    grow(0, 0);

    std::function<double(std::size_t)> best = [&](std::size_t c) {
        double sum = 0.0;
        for (std::size_t ch : cs[c].children) sum += best(ch);
        if (c == 0) return sum;
        if (!cs[c].children.empty() && sum > cs[c].stability) return sum;
        cs[c].selected = true;
        return cs[c].stability;
    };
    best(0);

    std::vector<int> raw(n, -1);
    int next = 0;
    std::function<void(std::size_t)> label = [&](std::size_t c) {
        if (c != 0 && cs[c].selected) {
            for (std::size_t p : cs[c].members) raw[p] = next;
            ++next;
            return;
        }
        for (std::size_t ch : cs[c].children) label(ch);
    };
    label(0);

    std::vector<int> remap(static_cast<std::size_t>(next), -1), out(n, -1);
    int k = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (raw[p] < 0) continue;
        if (remap[raw[p]] < 0) remap[raw[p]] = k++;
        out[p] = remap[raw[p]];
    }
    return out;
}

std::vector<int> two_means(const Matrix& x)
{
    const std::size_t n = x.rows();
    if (n < 2 || n > 20) throw std::invalid_argument("two_means oracle needs 2..20 points");
    double best = std::numeric_limits<double>::infinity();
    std::vector<int> out(n, 0);
    // Point 0 is pinned to group 0; every other split is tried.
    for (std::uint32_t mask = 1; mask < (1u << (n - 1)); ++mask) {
        std::vector<int> lab(n, 0);
        for (std::size_t i = 1; i < n; ++i) lab[i] = (mask >> (i - 1)) & 1u;
        double cost = 0.0;
        for (int g = 0; g < 2; ++g) {
            std::vector<double> c(x.cols(), 0.0);
            double cnt = 0;
            for (std::size_t i = 0; i < n; ++i)
                if (lab[i] == g) {
                    for (std::size_t j = 0; j < x.cols(); ++j) c[j] += x(i, j);
                    cnt += 1;
                }
            for (double& v : c) v /= cnt;
            for (std::size_t i = 0; i < n; ++i)
                if (lab[i] == g)
                    for (std::size_t j = 0; j < x.cols(); ++j) cost += (x(i, j) - c[j]) * (x(i, j) - c[j]);
        }
        if (cost < best) {
            best = cost;
            out = lab;
        }
    }
    return out;
}

}  // namespace etchpit::oracle
