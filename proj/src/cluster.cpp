#include "etchpit/cluster.hpp"

#include "etchpit/error.hpp"
#include "etchpit/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace etchpit::cluster {

namespace {

// Single-linkage hierarchy in which edges of equal weight merge in one step,
// so a node may have more than two children.
struct Node {
    double w = 0.0;
    std::size_t size = 1;
    std::vector<std::size_t> children;  // empty for points
};

struct DisjointSet {
    std::vector<std::size_t> parent;
    explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), std::size_t{0}); }
    std::size_t find(std::size_t x)
    {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
};

std::vector<Node> linkage(std::size_t n, std::vector<MstEdge> edges)
{
    std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) {
        if (x.w != y.w) return x.w < y.w;
        return std::pair(x.a, x.b) < std::pair(y.a, y.b);
    });
    std::vector<Node> nodes(n);
    DisjointSet ds(n);
    std::vector<std::size_t> node_of(n);  // set representative -> node id
    std::iota(node_of.begin(), node_of.end(), std::size_t{0});

    for (std::size_t p = 0; p < edges.size();) {
        std::size_t q = p;
        while (q < edges.size() && edges[q].w == edges[p].w) ++q;
        std::vector<std::size_t> touched;
        for (std::size_t e = p; e < q; ++e) {
            touched.push_back(ds.find(edges[e].a));
            touched.push_back(ds.find(edges[e].b));
        }
        std::sort(touched.begin(), touched.end());
        touched.erase(std::unique(touched.begin(), touched.end()), touched.end());
        std::vector<std::size_t> old_node(touched.size());
        for (std::size_t t = 0; t < touched.size(); ++t) old_node[t] = node_of[touched[t]];
        for (std::size_t e = p; e < q; ++e) {
            const std::size_t ra = ds.find(edges[e].a), rb = ds.find(edges[e].b);
            if (ra != rb) ds.parent[std::max(ra, rb)] = std::min(ra, rb);
        }
        // Group previous components by their new representative.
        std::vector<std::pair<std::size_t, std::size_t>> groups;  // (new root, old node)
        for (std::size_t t = 0; t < touched.size(); ++t) groups.push_back({ds.find(touched[t]), old_node[t]});
        std::sort(groups.begin(), groups.end());
        for (std::size_t g = 0; g < groups.size();) {
            std::size_t h = g;
            Node parent;
            parent.w = edges[p].w;
            parent.size = 0;
            while (h < groups.size() && groups[h].first == groups[g].first) {
                parent.children.push_back(groups[h].second);
                parent.size += nodes[groups[h].second].size;
                ++h;
            }
            nodes.push_back(std::move(parent));
            node_of[groups[g].first] = nodes.size() - 1;
            g = h;
        }
        p = q;
    }
    return nodes;
}

struct Cluster {
    std::size_t parent = SIZE_MAX;
    double birth = 0.0;
    std::vector<std::size_t> children;
    std::vector<std::pair<std::size_t, double>> fell;  // point, lambda
    double stability = 0.0;
};

void collect_points(const std::vector<Node>& nodes, std::size_t id, std::vector<std::size_t>& out)
{
    std::vector<std::size_t> stack{id};
    while (!stack.empty()) {
        const std::size_t v = stack.back();
        stack.pop_back();
        if (nodes[v].children.empty()) out.push_back(v);
        for (std::size_t c : nodes[v].children) stack.push_back(c);
    }
}

}  // namespace

ClusterParams ClusterParams::defaults_for(std::size_t n)
{
    ClusterParams p;
    p.min_cluster_size = std::max(15, static_cast<int>(n / 100));
    p.min_samples = 10;
    return p;
}

double lambda_of(double distance)
{
    constexpr double kMinDistance = 1e-10;
    return 1.0 / std::max(distance, kMinDistance);
}

std::vector<double> core_distances(const Matrix& x, int min_samples)
{
    if (min_samples < 1) throw PreconditionError("min_samples must be >= 1");
    if (x.rows() < 2) return std::vector<double>(x.rows(), 0.0);
    const auto k = std::min<std::size_t>(static_cast<std::size_t>(min_samples), x.rows() - 1);
    const kernels::KnnGraph g = kernels::parallel::knn(x, k);
    std::vector<double> core(x.rows());
    for (std::size_t i = 0; i < x.rows(); ++i) core[i] = g.dists(i)[k - 1];
    return core;
}

Matrix mutual_reachability(const Matrix& x, int min_samples)
{
    const std::size_t n = x.rows();
    const std::vector<double> core = core_distances(x, min_samples);
    Matrix m(n, n);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(n); ++ii) {
        const auto i = static_cast<std::size_t>(ii);
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double d = std::sqrt(squared_distance(x.row(i), x.row(j)));
            m(i, j) = std::max({core[i], core[j], d});
        }
    }
    return m;
}

std::vector<MstEdge> minimum_spanning_tree(const Matrix& dist)
{
    const std::size_t n = dist.rows();
    std::vector<MstEdge> tree;
    if (n < 2) return tree;
    std::vector<char> in(n, 0);
    std::vector<double> best(n, std::numeric_limits<double>::infinity());
    std::vector<std::size_t> from(n, 0);
    std::size_t cur = 0;
    in[0] = 1;
    for (std::size_t step = 1; step < n; ++step) {
        std::size_t next = SIZE_MAX;
        for (std::size_t j = 0; j < n; ++j) {
            if (in[j]) continue;
            if (dist(cur, j) < best[j]) {
                best[j] = dist(cur, j);
                from[j] = cur;
            }
            if (next == SIZE_MAX || best[j] < best[next]) next = j;
        }
        if (next >= n) break;  // unreachable; keeps the optimizer's bounds analysis quiet
        in[next] = 1;
        tree.push_back({std::min(from[next], next), std::max(from[next], next), best[next]});
        cur = next;
    }
    return tree;
}

ClusterLabeling hdbscan_from_distances(const Matrix& mreach, int min_cluster_size)
{
    if (min_cluster_size < 2) throw PreconditionError("min_cluster_size must be >= 2");
    const std::size_t n = mreach.rows();
    ClusterLabeling out;
    out.labels.assign(n, -1);
    out.strength.assign(n, 0.0);
    if (n == 0) return out;

    const std::vector<MstEdge> mst = minimum_spanning_tree(mreach);
    const double wmax = mst.empty() ? 0.0 : std::max_element(mst.begin(), mst.end(), [](auto& a, auto& b) {
                                                 return a.w < b.w;
                                             })->w;
    if (wmax == 0.0) {
        // Every point coincides: one cluster.
        out.labels.assign(n, 0);
        out.strength.assign(n, 1.0);
        out.n_clusters = 1;
        out.warnings.push_back("all points identical; returning a single cluster");
        return out;
    }

    const std::vector<Node> nodes = linkage(n, mst);
    const std::size_t mcs = static_cast<std::size_t>(min_cluster_size);
    std::vector<Cluster> clusters(1);  // root

    // (node, cluster) pairs still to condense.
    std::vector<std::pair<std::size_t, std::size_t>> work{{nodes.size() - 1, 0}};
    std::vector<std::size_t> pts;
    while (!work.empty()) {
        auto [node, c] = work.back();
        work.pop_back();
        const Node& nd = nodes[node];
        const double lambda = lambda_of(nd.w);
        std::vector<std::size_t> big, small;
        for (std::size_t ch : nd.children) (nodes[ch].size >= mcs ? big : small).push_back(ch);
        auto fall = [&](std::size_t ch) {
            pts.clear();
            collect_points(nodes, ch, pts);
            for (std::size_t p : pts) clusters[c].fell.push_back({p, lambda});
        };
        for (std::size_t ch : small) fall(ch);
        if (big.size() >= 2) {
            for (std::size_t ch : big) {
                Cluster child;
                child.parent = c;
                child.birth = lambda;
                clusters.push_back(std::move(child));
                const std::size_t id = clusters.size() - 1;
                clusters[c].children.push_back(id);
                work.push_back({ch, id});
            }
        } else if (big.size() == 1) {
            work.push_back({big.front(), c});
        }
    }

    std::vector<std::size_t> subtree_size(clusters.size(), 0);
    for (std::size_t c = clusters.size(); c-- > 0;) {
        subtree_size[c] += clusters[c].fell.size();
        if (clusters[c].parent != SIZE_MAX) subtree_size[clusters[c].parent] += subtree_size[c];
    }
    for (std::size_t c = 0; c < clusters.size(); ++c) {
        double s = 0.0;
        for (const auto& [p, l] : clusters[c].fell) s += l - clusters[c].birth;
        for (std::size_t ch : clusters[c].children)
            s += (clusters[ch].birth - clusters[c].birth) * static_cast<double>(subtree_size[ch]);
        clusters[c].stability = s;
    }

    // Excess of mass; ties keep the parent. The root is never selected.
    std::vector<char> selected(clusters.size(), 0);
    std::vector<double> best(clusters.size(), 0.0);
    for (std::size_t c = clusters.size(); c-- > 1;) {
        double children = 0.0;
        for (std::size_t ch : clusters[c].children) children += best[ch];
        if (!clusters[c].children.empty() && children > clusters[c].stability) {
            best[c] = children;
        } else {
            best[c] = clusters[c].stability;
            selected[c] = 1;
        }
    }

    std::vector<int> raw(n, -1);
    std::vector<double> lambda_p(n, 0.0);
    std::vector<std::size_t> stack(clusters[0].children.rbegin(), clusters[0].children.rend());
    int next_id = 0;
    while (!stack.empty()) {
        const std::size_t c = stack.back();
        stack.pop_back();
        if (!selected[c]) {
            stack.insert(stack.end(), clusters[c].children.rbegin(), clusters[c].children.rend());
            continue;
        }
        const int id = next_id++;
        std::vector<std::size_t> sub{c};
        std::vector<std::size_t> members;
        double lmax = 0.0;
        while (!sub.empty()) {
            const std::size_t s = sub.back();
            sub.pop_back();
            for (const auto& [p, l] : clusters[s].fell) {
                raw[p] = id;
                lambda_p[p] = l;
                members.push_back(p);
                lmax = std::max(lmax, l);
            }
            sub.insert(sub.end(), clusters[s].children.begin(), clusters[s].children.end());
        }
        for (std::size_t p : members) out.strength[p] = lmax > 0 ? std::min(lambda_p[p], lmax) / lmax : 1.0;
    }

    // Renumber by first member so labels do not depend on traversal order.
    std::vector<int> remap(static_cast<std::size_t>(next_id), -1);
    int k = 0;
    for (std::size_t p = 0; p < n; ++p) {
        if (raw[p] < 0) continue;
        if (remap[raw[p]] < 0) remap[raw[p]] = k++;
        out.labels[p] = remap[raw[p]];
    }
    out.n_clusters = k;
    return out;
}

ClusterLabeling hdbscan(const Matrix& x, const ClusterParams& params)
{
    if (params.min_samples < 1) throw PreconditionError("min_samples must be >= 1");
    if (x.rows() < 2 * static_cast<std::size_t>(params.min_cluster_size))
        throw PreconditionError("HDBSCAN needs at least 2 * min_cluster_size points (" + std::to_string(x.rows()) +
                                " < " + std::to_string(2 * params.min_cluster_size) + ")");
    return hdbscan_from_distances(mutual_reachability(x, params.min_samples), params.min_cluster_size);
}

std::optional<PitType> TypeAssignment::type_of(int cluster) const
{
    if (auto it = by_cluster.find(cluster); it != by_cluster.end()) return it->second;
    return std::nullopt;
}

TypeAssignment assign_types(const ClusterLabeling& labeling, std::span<const PatchShape> shapes)
{
    if (shapes.size() != labeling.labels.size()) throw PreconditionError("shape count differs from label count");
    std::map<int, ClusterEvidence> ev;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        const int l = labeling.labels[i];
        if (l < 0) continue;
        auto& e = ev[l];
        e.cluster = l;
        ++e.population;
        e.mean_lengthiness += shapes[i].lengthiness;
        e.mean_area += shapes[i].area;
    }
    std::vector<ClusterEvidence> all;
    for (auto& [l, e] : ev) {
        e.mean_lengthiness /= static_cast<double>(e.population);
        e.mean_area /= static_cast<double>(e.population);
        all.push_back(e);
    }
    TypeAssignment out;
    std::stable_sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.population > b.population; });
    if (all.size() > 3) {
        out.warnings.push_back(std::to_string(all.size()) + " clusters found; only the 3 largest are typed");
        all.resize(3);
    }
    std::sort(all.begin(), all.end(), [](const auto& a, const auto& b) { return a.cluster < b.cluster; });

    auto set = [&](ClusterEvidence& e, PitType t) {
        e.type = t;
        out.by_cluster[e.cluster] = t;
    };
    if (all.size() == 1) {
        if (all[0].mean_lengthiness > 1.5) set(all[0], PitType::BPD);
        else out.warnings.push_back("single round cluster; left unassigned");
    } else if (all.size() >= 2) {
        std::size_t bpd = 0;
        for (std::size_t i = 1; i < all.size(); ++i)
            if (all[i].mean_lengthiness > all[bpd].mean_lengthiness) bpd = i;
        set(all[bpd], PitType::BPD);
        std::vector<std::size_t> round;
        for (std::size_t i = 0; i < all.size(); ++i)
            if (i != bpd) round.push_back(i);
        if (round.size() == 1) {
            out.warnings.push_back("one round cluster; TED/TSD cannot be told apart by area");
        } else {
            auto& x = all[round[0]];
            auto& y = all[round[1]];
            const double hi = std::max(x.mean_area, y.mean_area), lo = std::min(x.mean_area, y.mean_area);
            if (hi - lo <= 0.05 * hi) {
                out.warnings.push_back("round clusters have mean areas within 5%; TED/TSD left unassigned");
            } else {
                set(x.mean_area > y.mean_area ? x : y, PitType::TSD);
                set(x.mean_area > y.mean_area ? y : x, PitType::TED);
            }
        }
    } else {
        out.warnings.push_back("no clusters to type");
    }
    for (PitType t : kPitTypes) {
        bool found = false;
        for (const auto& [c, ty] : out.by_cluster) found = found || ty == t;
        if (!found) out.unassigned.push_back(t);
    }
    out.clusters = std::move(all);
    return out;
}

}  // namespace etchpit::cluster
