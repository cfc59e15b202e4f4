#include "etchpit/metrics.hpp"

#include "etchpit/error.hpp"

#include <cmath>
#include <map>
#include <vector>

namespace etchpit::metrics {

namespace {

double choose2(double n) { return n * (n - 1.0) / 2.0; }

}  // namespace

double adjusted_rand(std::span<const int> a, std::span<const int> b)
{
    if (a.size() != b.size()) throw PreconditionError("labelings differ in length");
    std::map<std::pair<int, int>, double> joint;
    std::map<int, double> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        joint[{a[i], b[i]}] += 1.0;
        ra[a[i]] += 1.0;
        rb[b[i]] += 1.0;
    }
    double index = 0.0, sa = 0.0, sb = 0.0;
    for (const auto& [k, v] : joint) index += choose2(v);
    for (const auto& [k, v] : ra) sa += choose2(v);
    for (const auto& [k, v] : rb) sb += choose2(v);
    const double total = choose2(static_cast<double>(a.size()));
    const double expected = total > 0 ? sa * sb / total : 0.0;
    const double max_index = (sa + sb) / 2.0;
    if (max_index == expected) return 1.0;  // both trivial
    return (index - expected) / (max_index - expected);
}

double silhouette(const Matrix& x, std::span<const int> labels)
{
    const std::size_t n = x.rows();
    if (labels.size() != n) throw PreconditionError("label count differs from point count");
    std::map<int, std::size_t> sizes;
    for (int l : labels) ++sizes[l];
    if (sizes.size() < 2) return 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        std::map<int, double> sum;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) sum[labels[j]] += std::sqrt(squared_distance(x.row(i), x.row(j)));
        const std::size_t own = sizes[labels[i]];
        if (own <= 1) continue;
        const double a = sum[labels[i]] / static_cast<double>(own - 1);
        double b = INFINITY;
        for (const auto& [l, s] : sum)
            if (l != labels[i]) b = std::min(b, s / static_cast<double>(sizes[l]));
        if (std::max(a, b) > 0) total += (b - a) / std::max(a, b);
    }
    return total / static_cast<double>(n);
}

PairDistances mean_pair_distances(const Matrix& x, std::span<const int> labels)
{
    double si = 0.0, so = 0.0, ni = 0.0, no = 0.0;
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = i + 1; j < x.rows(); ++j) {
            const double d = std::sqrt(squared_distance(x.row(i), x.row(j)));
            if (labels[i] == labels[j]) {
                si += d;
                ni += 1;
            } else {
                so += d;
                no += 1;
            }
        }
    return {ni > 0 ? si / ni : 0.0, no > 0 ? so / no : 0.0};
}

}  // namespace etchpit::metrics
