#include "etchpit/cluster.hpp"
#include "etchpit/embed.hpp"
#include "etchpit/error.hpp"
#include "etchpit/metrics.hpp"

#include "fixtures.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <algorithm>
#include <climits>
#include <cmath>
#include <map>
#include <numeric>
#include <random>

using namespace etchpit;
using namespace etchpit::cluster;

namespace {

Matrix euclidean(const Matrix& x)
{
    Matrix d(x.rows(), x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i)
        for (std::size_t j = 0; j < x.rows(); ++j) {
            double s = 0;
            for (std::size_t k = 0; k < x.cols(); ++k) s += (x(i, k) - x(j, k)) * (x(i, k) - x(j, k));
            d(i, j) = std::sqrt(s);
        }
    return d;
}

double tree_weight(const std::vector<MstEdge>& t)
{
    double s = 0;
    for (const auto& e : t) s += e.w;
    return s;
}

Matrix random_points(std::size_t n, std::size_t dim, std::mt19937_64& rng, bool integer_grid)
{
    Matrix x(n, dim);
    std::uniform_real_distribution<double> u(0.0, 10.0);
    std::uniform_int_distribution<int> g(0, 4);
    for (double& v : x.data()) v = integer_grid ? g(rng) : u(rng);
    return x;
}

// Two labelings agree up to renaming of the non-noise labels.
bool same_partition(const std::vector<int>& a, const std::vector<int>& b)
{
    if (a.size() != b.size()) return false;
    std::map<int, int> ab, ba;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if ((a[i] < 0) != (b[i] < 0)) return false;
        if (a[i] < 0) continue;
        if (ab.emplace(a[i], b[i]).first->second != b[i]) return false;
        if (ba.emplace(b[i], a[i]).first->second != a[i]) return false;
    }
    return true;
}

ClusterLabeling with_labels(std::vector<int> labels)
{
    ClusterLabeling l;
    l.labels = std::move(labels);
    l.strength.assign(l.labels.size(), 1.0);
    l.n_clusters = *std::max_element(l.labels.begin(), l.labels.end()) + 1;
    return l;
}

}  // namespace

TEST_CASE("mutual reachability on an evenly spaced line")
{
    Matrix x(5, 1);
    for (std::size_t i = 0; i < 5; ++i) x(i, 0) = static_cast<double>(i);
    const auto core = core_distances(x, 1);
    for (double c : core) CHECK(c == 1.0);
    const Matrix m = mutual_reachability(x, 1);
    for (std::size_t i = 0; i + 1 < 5; ++i) CHECK(m(i, i + 1) == 1.0);
    CHECK(m(0, 4) == 4.0);
    for (std::size_t i = 0; i < 5; ++i) {
        CHECK(m(i, i) == 0.0);
        for (std::size_t j = 0; j < 5; ++j) CHECK(m(i, j) == m(j, i));
    }
    // The ends have their second neighbour two steps away.
    const auto core2 = core_distances(x, 2);
    CHECK(core2[0] == 2.0);
    CHECK(core2[2] == 1.0);
}

TEST_CASE("duplicated points have zero core distance")
{
    Matrix x(4, 2);
    x(1, 0) = 0.0;
    x(2, 0) = 3.0;
    x(3, 0) = 3.0;
    x(3, 1) = 0.0;
    const auto core = core_distances(x, 1);
    for (double c : core) CHECK(c == 0.0);
    const Matrix m = mutual_reachability(x, 1);
    CHECK(m(0, 2) == 3.0);
    CHECK(m(0, 1) == 0.0);
    CHECK(std::isfinite(lambda_of(0.0)));
    CHECK(lambda_of(0.5) == 2.0);
}

TEST_CASE("mutual reachability matches the brute-force oracle")
{
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 20; ++trial) {
        const Matrix x = random_points(12, 3, rng, trial % 2 == 1);
        for (int k : {1, 3, 5}) CHECK(mutual_reachability(x, k) == oracle::mutual_reachability(x, k));
    }
}

TEST_CASE("MST weight equals the exhaustive minimum")
{
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const std::size_t n = 3 + trial % 7;
        const Matrix x = random_points(n, 2, rng, trial % 3 == 0);
        const Matrix d = euclidean(x);
        const auto t = minimum_spanning_tree(d);
        CHECK(t.size() == n - 1);
        CHECK(tree_weight(t) == doctest::Approx(oracle::min_spanning_weight_pruefer(d)).epsilon(1e-12));
        CHECK(tree_weight(t) == doctest::Approx(oracle::min_spanning_weight_bnb(d)).epsilon(1e-12));
    }
}

TEST_CASE("HDBSCAN labels match the condensed-tree oracle")
{
    std::mt19937_64 rng(6);
    int with_clusters = 0, with_noise = 0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 6 + trial % 7;
        const bool grid = trial % 3 == 0;
        const Matrix x = random_points(n, 2, rng, grid);
        const int ms = 1 + trial % 3;
        const int mcs = 2 + trial % 2;
        const Matrix m = mutual_reachability(x, ms);
        const auto got = hdbscan_from_distances(m, mcs);
        const auto want = oracle::hdbscan_labels(m, mcs);
        INFO("trial ", trial, " n ", n, " grid ", grid);
        CHECK(got.labels == want);
        with_clusters += got.n_clusters >= 2;
        with_noise += std::count(want.begin(), want.end(), -1) > 0;
    }
    // The sample should exercise real splits and noise, not only trivial outcomes.
    CHECK(with_clusters >= 10);
    CHECK(with_noise >= 10);
}

TEST_CASE("two blobs with two far outliers")
{
    const auto p = testing::gaussian_clusters(2, 10, 2, 10.0, 12, 1.0);
    Matrix x(22, 2);
    for (std::size_t i = 0; i < 20; ++i)
        for (std::size_t k = 0; k < 2; ++k) x(i, k) = p.x(i, k);
    x(20, 0) = 80.0;
    x(21, 1) = -80.0;
    ClusterParams params;
    params.min_cluster_size = 5;
    params.min_samples = 3;
    const auto l = hdbscan(x, params);
    CHECK(l.n_clusters == 2);
    CHECK(l.labels[20] == -1);
    CHECK(l.labels[21] == -1);
    CHECK(l.strength[20] == 0.0);
    const std::vector<int> blob(l.labels.begin(), l.labels.begin() + 20);
    CHECK(metrics::adjusted_rand(blob, p.labels) == 1.0);
    CHECK(l.labels == oracle::hdbscan_labels(mutual_reachability(x, 3), 5));
    for (double s : l.strength) {
        CHECK(s >= 0.0);
        CHECK(s <= 1.0);
    }
}

TEST_CASE("uniform points with a large min_cluster_size are all noise")
{
    std::mt19937_64 rng(13);
    const Matrix x = random_points(40, 2, rng, false);
    ClusterParams params;
    params.min_cluster_size = 20;
    params.min_samples = 5;
    const auto l = hdbscan(x, params);
    CHECK(l.n_clusters == 0);
    for (int v : l.labels) CHECK(v == -1);
    CHECK(l.labels == oracle::hdbscan_labels(mutual_reachability(x, 5), 20));
}

TEST_CASE("identical points form one cluster")
{
    const auto l = hdbscan(Matrix(10, 3, 0.25), {3, 2});
    CHECK(l.n_clusters == 1);
    for (int v : l.labels) CHECK(v == 0);
    CHECK_FALSE(l.warnings.empty());
}

TEST_CASE("preconditions")
{
    CHECK_THROWS_AS(hdbscan(Matrix(9, 2), {5, 2}), PreconditionError);
    CHECK_THROWS_AS(hdbscan(Matrix(9, 2), {2, 0}), PreconditionError);
    CHECK_THROWS_AS(hdbscan_from_distances(Matrix(4, 4), 1), PreconditionError);
    CHECK(ClusterParams::defaults_for(600).min_cluster_size == 15);
    CHECK(ClusterParams::defaults_for(5000).min_cluster_size == 50);
    CHECK(ClusterParams::defaults_for(5000).min_samples == 10);
}

TEST_CASE("labels are invariant under permutation")
{
    const auto p = testing::gaussian_clusters(3, 20, 3, 8.0, 14);
    const ClusterParams params{8, 4};
    const auto base = hdbscan(p.x, params);
    REQUIRE(base.n_clusters == 3);
    std::vector<std::size_t> perm(p.x.rows());
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(15);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        Matrix y(p.x.rows(), p.x.cols());
        for (std::size_t i = 0; i < perm.size(); ++i)
            for (std::size_t k = 0; k < p.x.cols(); ++k) y(i, k) = p.x(perm[i], k);
        const auto l = hdbscan(y, params);
        std::vector<int> back(perm.size());
        std::vector<double> strength(perm.size());
        for (std::size_t i = 0; i < perm.size(); ++i) {
            back[perm[i]] = l.labels[i];
            strength[perm[i]] = l.strength[i];
        }
        CHECK(same_partition(back, base.labels));
        for (std::size_t i = 0; i < perm.size(); ++i) CHECK(strength[i] == doctest::Approx(base.strength[i]));
    }
}

TEST_CASE("larger min_cluster_size never adds clusters")
{
    const auto p = testing::gaussian_clusters(4, 25, 3, 9.0, 16);
    int prev = INT_MAX;
    for (int mcs = 2; mcs <= 50; ++mcs) {
        const auto l = hdbscan(p.x, {mcs, 5});
        INFO("min_cluster_size ", mcs);
        CHECK(l.n_clusters <= prev);
        prev = l.n_clusters;
    }
}

TEST_CASE("three clusters in a UMAP embedding")
{
    const auto p = testing::gaussian_clusters(3, 100, 50, 12.0, 17);
    const auto e = embed::reduce_umap(p.x, embed::EmbeddingConfig{});
    const auto l = hdbscan(e.coords, ClusterParams::defaults_for(e.size()));
    CHECK(l.n_clusters == 3);
    CHECK(metrics::adjusted_rand(l.labels, p.labels) >= 0.9);
    const auto noise = std::count(l.labels.begin(), l.labels.end(), -1);
    CHECK(static_cast<double>(noise) <= 0.05 * static_cast<double>(l.labels.size()));
}

TEST_CASE("type assignment from cluster shape statistics")
{
    SUBCASE("lengthiness then area")
    {
        const auto l = with_labels({0, 0, 1, 1, 2, 2});
        const std::vector<PatchShape> s = {{2.4, 390}, {2.6, 410}, {1.1, 140}, {1.1, 160}, {1.0, 600}, {1.1, 600}};
        const auto t = assign_types(l, s);
        REQUIRE(t.clusters.size() == 3);
        CHECK(t.clusters[0].mean_lengthiness == doctest::Approx(2.5));
        CHECK(t.clusters[2].mean_lengthiness == doctest::Approx(1.05));
        CHECK(t.clusters[1].mean_area == doctest::Approx(150));
        CHECK(t.type_of(0) == PitType::BPD);
        CHECK(t.type_of(1) == PitType::TED);
        CHECK(t.type_of(2) == PitType::TSD);
        CHECK(t.unassigned.empty());
        CHECK(t.warnings.empty());
    }
    SUBCASE("a single cluster is BPD only when elongated")
    {
        const auto l = with_labels({0, 0, 0});
        const std::vector<PatchShape> elongated(3, {1.6, 100}), round(3, {1.4, 100});
        CHECK(assign_types(l, elongated).type_of(0) == PitType::BPD);
        const auto t = assign_types(l, round);
        CHECK_FALSE(t.type_of(0).has_value());
        CHECK(t.unassigned.size() == 3);
    }
    SUBCASE("round clusters with areas within 5% stay unassigned")
    {
        const auto l = with_labels({0, 1, 2});
        const std::vector<PatchShape> s = {{2.5, 400}, {1.1, 500}, {1.05, 520}};
        const auto t = assign_types(l, s);
        CHECK(t.type_of(0) == PitType::BPD);
        CHECK_FALSE(t.type_of(1).has_value());
        CHECK_FALSE(t.type_of(2).has_value());
        CHECK(t.unassigned == std::vector<PitType>{PitType::TED, PitType::TSD});
        CHECK_FALSE(t.warnings.empty());
    }
    SUBCASE("only the three largest of four clusters are typed")
    {
        const auto l = with_labels({0, 0, 0, 1, 1, 1, 2, 2, 2, 3, -1});
        std::vector<PatchShape> s(11, {1.0, 100});
        for (int i = 0; i < 3; ++i) s[static_cast<std::size_t>(i)] = {3.0, 300};
        for (int i = 6; i < 9; ++i) s[static_cast<std::size_t>(i)] = {1.0, 900};
        s[9] = {9.0, 5};
        const auto t = assign_types(l, s);
        CHECK(t.type_of(0) == PitType::BPD);
        CHECK(t.type_of(1) == PitType::TED);
        CHECK(t.type_of(2) == PitType::TSD);
        CHECK_FALSE(t.type_of(3).has_value());
        CHECK_FALSE(t.warnings.empty());
    }
    CHECK_THROWS_AS(assign_types(with_labels({0, 0}), std::vector<PatchShape>(3)), PreconditionError);
}
