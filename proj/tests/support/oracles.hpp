#pragma once

// Brute-force references the library is checked against. They share no code
// with src/ beyond the plain data types.

#include "etchpit/image.hpp"
#include "etchpit/matrix.hpp"

#include <vector>

namespace etchpit::oracle {

struct Descriptors {
    double major = 0.0;
    double minor = 0.0;
    double lengthiness = 0.0;
    double compactness = 0.0;
    double circularity = 0.0;
    double perimeter = 0.0;
};

/// Length of the closed 8-connected boundary chain of a shape whose rows are
/// single runs, from the run end points alone. Returns a negative value for
/// shapes outside that range (split rows, gaps, rows that do not touch).
double convex_perimeter(const BinaryMask& m);

/// Ellipse axes from the eigenvalues of the pixel covariance (Eigen solver),
/// then the three gate descriptors.
Descriptors descriptors(const BinaryMask& m);

/// Minimum spanning-tree weight by branch and bound over edge subsets.
/// Exhaustive in the sense that every subset is either visited or provably
/// no better than the incumbent.
double min_spanning_weight_bnb(const Matrix& dist);

/// Minimum over every labelled tree (Pruefer sequences). N <= 9.
double min_spanning_weight_pruefer(const Matrix& dist);

/// Core distance: Euclidean distance to the min_samples-th nearest other point.
Matrix mutual_reachability(const Matrix& x, int min_samples);

/// Top-down condensed tree: at each distinct distance level w, components of
/// the graph restricted to edges < w. Excess-of-mass selection with ties to
/// the parent and the root never selected; labels renumbered by first member.
std::vector<int> hdbscan_labels(const Matrix& mreach, int min_cluster_size);

/// 2-means with exhaustive seeding over point pairs (small N only).
std::vector<int> two_means(const Matrix& x);

}  // namespace etchpit::oracle
