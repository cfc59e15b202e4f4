#pragma once

#include "etchpit/matrix.hpp"

#include <span>

namespace etchpit::metrics {

/// Adjusted Rand index between two labelings (any integer labels; -1 is an ordinary label here).
double adjusted_rand(std::span<const int> a, std::span<const int> b);

/// Mean silhouette coefficient under Euclidean distance. Points in singleton
/// clusters contribute 0.
double silhouette(const Matrix& x, std::span<const int> labels);

/// Mean intra-cluster and inter-cluster pairwise distances.
struct PairDistances {
    double intra = 0.0;
    double inter = 0.0;
};
PairDistances mean_pair_distances(const Matrix& x, std::span<const int> labels);

}  // namespace etchpit::metrics
