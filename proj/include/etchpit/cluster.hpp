#pragma once

#include "etchpit/matrix.hpp"
#include "etchpit/types.hpp"

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

/// HDBSCAN over an embedding, and the rule that names clusters by pit type.
namespace etchpit::cluster {

struct ClusterParams {
    int min_cluster_size = 15;
    int min_samples = 10;

    /// max(15, N/100) and 10.
    static ClusterParams defaults_for(std::size_t n);
};

/// Distance to the min_samples-th nearest other point.
std::vector<double> core_distances(const Matrix& x, int min_samples);

/// max(core_a, core_b, d(a,b)); zero diagonal.
Matrix mutual_reachability(const Matrix& x, int min_samples);

struct MstEdge {
    std::size_t a = 0;
    std::size_t b = 0;
    double w = 0.0;
};

/// Prim's algorithm on a dense symmetric distance matrix.
std::vector<MstEdge> minimum_spanning_tree(const Matrix& dist);

/// lambda = 1/d, with d = 0 mapped to a large finite value so stabilities stay finite.
double lambda_of(double distance);

struct ClusterLabeling {
    std::vector<int> labels;       // -1 noise, else 0..K-1 in order of first member
    std::vector<double> strength;  // 0 for noise
    int n_clusters = 0;
    std::vector<std::string> warnings;
};

/// Clustering from a precomputed mutual-reachability matrix.
ClusterLabeling hdbscan_from_distances(const Matrix& mreach, int min_cluster_size);
ClusterLabeling hdbscan(const Matrix& x, const ClusterParams& params);

/// Per-patch shape evidence used to name clusters.
struct PatchShape {
    double lengthiness = 1.0;
    double area = 0.0;
};

struct ClusterEvidence {
    int cluster = -1;
    std::size_t population = 0;
    double mean_lengthiness = 0.0;
    double mean_area = 0.0;
    std::optional<PitType> type;
};

struct TypeAssignment {
    std::vector<ClusterEvidence> clusters;  // the (up to three) largest clusters, by id
    std::map<int, PitType> by_cluster;
    std::vector<PitType> unassigned;        // types no cluster received
    std::vector<std::string> warnings;

    std::optional<PitType> type_of(int cluster) const;
};

/// Largest mean lengthiness -> BPD; of the rest, larger mean area -> TSD,
/// smaller -> TED. Areas within 5% leave both round types unassigned.
TypeAssignment assign_types(const ClusterLabeling& labeling, std::span<const PatchShape> shapes);

}  // namespace etchpit::cluster
