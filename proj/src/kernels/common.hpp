#pragma once

#include "etchpit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace etchpit::kernels::detail {

inline void knn_row(const Matrix& x, std::size_t i, std::size_t k, std::vector<std::pair<double, std::uint32_t>>& scratch,
                    KnnGraph& g)
{
    const std::size_t n = x.rows();
    scratch.clear();
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        scratch.emplace_back(squared_distance(x.row(i), x.row(j)), static_cast<std::uint32_t>(j));
    }
    std::partial_sort(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(k), scratch.end());
    for (std::size_t m = 0; m < k; ++m) {
        g.indices[i * k + m] = scratch[m].second;
        g.distances[i * k + m] = std::sqrt(scratch[m].first);
    }
}

inline double window_ssd_at(const GrayImage& seed, int cx, int cy, const WindowQuery& q)
{
    double s = 0.0;
    for (std::size_t m = 0; m < q.dx.size(); ++m) {
        const double d = seed.at(cx + q.dx[m], cy + q.dy[m]) - q.target[m];
        s += q.weight[m] * d * d;
    }
    return s;
}

inline float dilate_at(const GrayImage& img, int x, int y, const StructuringElement& se)
{
    float best = -std::numeric_limits<float>::infinity();
    for (std::size_t m = 0; m < se.dx.size(); ++m) {
        const int sx = x - se.dx[m];
        const int sy = y - se.dy[m];
        if (sx < 0 || sy < 0 || sx >= img.width() || sy >= img.height()) continue;
        best = std::max(best, img.at(sx, sy) + se.height[m]);
    }
    return best;
}

inline float erode_at(const GrayImage& img, int x, int y, const StructuringElement& se)
{
    float best = std::numeric_limits<float>::infinity();
    for (std::size_t m = 0; m < se.dx.size(); ++m) {
        const int sx = x + se.dx[m];
        const int sy = y + se.dy[m];
        if (sx < 0 || sy < 0 || sx >= img.width() || sy >= img.height()) continue;
        best = std::min(best, img.at(sx, sy) - se.height[m]);
    }
    return best;
}

inline KnnGraph make_graph(const Matrix& x, std::size_t k)
{
    KnnGraph g;
    g.n = x.rows();
    g.k = std::min(k, g.n > 0 ? g.n - 1 : 0);
    g.indices.resize(g.n * g.k);
    g.distances.resize(g.n * g.k);
    return g;
}

}  // namespace etchpit::kernels::detail
