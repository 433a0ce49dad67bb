#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "khid/error.hpp"
#include "khid/topics.hpp"

namespace khid::topics {
namespace {

struct MstEdge {
  int a, b;
  double weight;
};

// Merge of two or more components at one distance. Edges of equal weight
// merge simultaneously, so the hierarchy does not depend on how ties among
// them are ordered.
struct LinkageNode {
  std::vector<int> children;
  double distance;
  int size;
};

// One row of the condensed tree: `child` is a point (< n) or a cluster id
// offset by n, leaving `parent` at density `lambda`.
struct CondensedRow {
  int parent;
  int child;
  double lambda;
  int size;
};

double sq_dist(const Mat& p, Eigen::Index i, Eigen::Index j) { return (p.row(i) - p.row(j)).squaredNorm(); }

std::vector<double> core_distances(const Mat& points, int k) {
  const auto n = points.rows();
  std::vector<double> core(static_cast<std::size_t>(n));
  std::vector<double> row(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) row[static_cast<std::size_t>(j)] = sq_dist(points, i, j);
    // k-th smallest including the point itself.
    std::nth_element(row.begin(), row.begin() + (k - 1), row.end());
    core[static_cast<std::size_t>(i)] = std::sqrt(row[static_cast<std::size_t>(k - 1)]);
  }
  return core;
}

// Prim on the dense mutual-reachability graph; ties go to the smaller index.
std::vector<MstEdge> mutual_reachability_mst(const Mat& points, const std::vector<double>& core) {
  const int n = static_cast<int>(points.rows());
  std::vector<MstEdge> edges;
  edges.reserve(static_cast<std::size_t>(n > 0 ? n - 1 : 0));
  std::vector<char> in_tree(static_cast<std::size_t>(n), 0);
  std::vector<double> best(static_cast<std::size_t>(n), std::numeric_limits<double>::infinity());
  std::vector<int> from(static_cast<std::size_t>(n), -1);
  int current = 0;
  in_tree[0] = 1;
  for (int step = 1; step < n; ++step) {
    int next = -1;
    double next_w = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (in_tree[j]) continue;
      double d = std::sqrt(sq_dist(points, current, j));
      double mr = std::max({d, core[current], core[j]});
      if (mr < best[j]) {
        best[j] = mr;
        from[j] = current;
      }
      if (best[j] < next_w) {
        next_w = best[j];
        next = j;
      }
    }
    in_tree[next] = 1;
    edges.push_back({from[next], next, next_w});
    current = next;
  }
  return edges;
}

int find(std::vector<int>& parent, int x) {
  while (parent[x] != x) {
    parent[x] = parent[parent[x]];
    x = parent[x];
  }
  return x;
}

std::vector<LinkageNode> single_linkage(std::vector<MstEdge> edges, int n) {
  std::sort(edges.begin(), edges.end(), [](const MstEdge& x, const MstEdge& y) { return x.weight < y.weight; });
  std::vector<int> parent(static_cast<std::size_t>(2 * n - 1));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> size(static_cast<std::size_t>(2 * n - 1), 1);
  std::vector<LinkageNode> nodes;
  std::vector<int> local(parent.size(), -1);
  std::size_t i = 0;
  while (i < edges.size()) {
    std::size_t j = i;
    while (j < edges.size() && edges[j].weight == edges[i].weight) ++j;
    // Group the current components joined by this level's edges.
    auto local_find = [&](int x) {
      while (local[static_cast<std::size_t>(x)] != x) x = local[static_cast<std::size_t>(x)];
      return x;
    };
    std::vector<int> touched;
    for (std::size_t k = i; k < j; ++k) {
      int ra = find(parent, edges[k].a), rb = find(parent, edges[k].b);
      for (int r : {ra, rb}) {
        if (local[static_cast<std::size_t>(r)] < 0) {
          local[static_cast<std::size_t>(r)] = r;
          touched.push_back(r);
        }
      }
      ra = local_find(ra);
      rb = local_find(rb);
      if (ra != rb) local[static_cast<std::size_t>(std::max(ra, rb))] = std::min(ra, rb);
    }
    std::map<int, std::vector<int>> groups;
    for (int r : touched) groups[local_find(r)].push_back(r);
    for (int r : touched) local[static_cast<std::size_t>(r)] = -1;
    for (auto& [_, members] : groups) {
      if (members.size() < 2) continue;
      const int id = n + static_cast<int>(nodes.size());
      int total = 0;
      for (int m : members) {
        total += size[static_cast<std::size_t>(m)];
        parent[static_cast<std::size_t>(m)] = id;
      }
      size[static_cast<std::size_t>(id)] = total;
      std::sort(members.begin(), members.end());
      nodes.push_back({std::move(members), edges[i].weight, total});
    }
    i = j;
  }
  return nodes;
}

}  // namespace

ClusterAssignment cluster_density(const Mat& points, int min_cluster_size) {
  if (min_cluster_size < 2) throw ContractError("cluster_density: min_cluster_size must be >= 2");
  const int n = static_cast<int>(points.rows());
  ClusterAssignment out;
  out.labels.assign(static_cast<std::size_t>(n), -1);
  if (n < min_cluster_size || n < 2) return out;

  auto core = core_distances(points, min_cluster_size);
  auto tree = single_linkage(mutual_reachability_mst(points, core), n);

  // Coincident points have distance 0; give them a finite density above
  // every observed one so stabilities stay finite.
  double min_positive = std::numeric_limits<double>::infinity();
  for (const auto& node : tree) {
    if (node.distance > 0) min_positive = std::min(min_positive, node.distance);
  }
  const double lambda_cap = std::isfinite(min_positive) ? 2.0 / min_positive : 1.0;
  auto lambda_of = [&](double d) { return d > 0 ? 1.0 / d : lambda_cap; };
  auto node_size = [&](int id) { return id < n ? 1 : tree[static_cast<std::size_t>(id - n)].size; };

  std::vector<CondensedRow> rows;
  const int root = n + static_cast<int>(tree.size()) - 1;
  std::vector<int> cluster_of(static_cast<std::size_t>(root + 1), -1);
  std::vector<double> birth{0.0};
  std::vector<int> cluster_parent{-1};
  cluster_of[static_cast<std::size_t>(root)] = 0;

  auto fall_out = [&](int subtree, int cluster, double lambda) {
    std::vector<int> stack{subtree};
    while (!stack.empty()) {
      int id = stack.back();
      stack.pop_back();
      if (id < n) {
        rows.push_back({cluster, id, lambda, 1});
      } else {
        for (int c : tree[static_cast<std::size_t>(id - n)].children) stack.push_back(c);
      }
    }
  };

  // Top-down; node ids grow with merge distance, so iterating ids in
  // descending order visits parents before children. A node may split into
  // several parts at once: two or more large parts each start a cluster,
  // a single large part continues its parent, small parts fall out.
  for (int id = root; id >= n; --id) {
    const int cluster = cluster_of[static_cast<std::size_t>(id)];
    if (cluster < 0) continue;
    const auto& node = tree[static_cast<std::size_t>(id - n)];
    const double lambda = lambda_of(node.distance);
    std::vector<int> big;
    for (int child : node.children) {
      if (node_size(child) >= min_cluster_size) {
        big.push_back(child);
      } else {
        fall_out(child, cluster, lambda);
      }
    }
    if (big.size() >= 2) {
      for (int child : big) {
        const int cid = static_cast<int>(birth.size());
        birth.push_back(lambda);
        cluster_parent.push_back(cluster);
        cluster_of[static_cast<std::size_t>(child)] = cid;
        rows.push_back({cluster, n + cid, lambda, node_size(child)});
      }
    } else if (big.size() == 1) {
      cluster_of[static_cast<std::size_t>(big[0])] = cluster;
    }
  }

  const int clusters = static_cast<int>(birth.size());
  std::vector<double> stability(static_cast<std::size_t>(clusters), 0.0);
  std::vector<std::vector<int>> children(static_cast<std::size_t>(clusters));
  for (const auto& r : rows) {
    stability[static_cast<std::size_t>(r.parent)] += (r.lambda - birth[static_cast<std::size_t>(r.parent)]) * r.size;
    if (r.child >= n) children[static_cast<std::size_t>(r.parent)].push_back(r.child - n);
  }

  // Excess of mass, leaves first (children always have larger ids). The
  // root competes only when the hierarchy never splits.
  std::vector<char> selected(static_cast<std::size_t>(clusters), 0);
  std::vector<double> subtree(stability);
  for (int c = clusters - 1; c >= 1; --c) {
    const auto& ch = children[static_cast<std::size_t>(c)];
    double child_sum = 0.0;
    for (int k : ch) child_sum += subtree[static_cast<std::size_t>(k)];
    if (ch.empty() || stability[static_cast<std::size_t>(c)] >= child_sum) {
      selected[static_cast<std::size_t>(c)] = 1;
      std::vector<int> stack(ch.begin(), ch.end());
      while (!stack.empty()) {
        int k = stack.back();
        stack.pop_back();
        selected[static_cast<std::size_t>(k)] = 0;
        for (int g : children[static_cast<std::size_t>(k)]) stack.push_back(g);
      }
      subtree[static_cast<std::size_t>(c)] = stability[static_cast<std::size_t>(c)];
    } else {
      subtree[static_cast<std::size_t>(c)] = child_sum;
    }
  }
  if (children[0].empty()) selected[0] = 1;

  std::vector<int> raw(static_cast<std::size_t>(n), -1);
  for (const auto& r : rows) {
    if (r.child >= n) continue;
    for (int c = r.parent; c >= 0; c = cluster_parent[static_cast<std::size_t>(c)]) {
      if (selected[static_cast<std::size_t>(c)]) {
        raw[static_cast<std::size_t>(r.child)] = c;
        break;
      }
    }
  }

  // Renumber by each cluster's smallest member index.
  std::vector<int> renumber(static_cast<std::size_t>(clusters), -1);
  int next = 0;
  for (int i = 0; i < n; ++i) {
    int c = raw[static_cast<std::size_t>(i)];
    if (c < 0) continue;
    if (renumber[static_cast<std::size_t>(c)] < 0) renumber[static_cast<std::size_t>(c)] = next++;
    out.labels[static_cast<std::size_t>(i)] = renumber[static_cast<std::size_t>(c)];
  }
  out.cluster_count = next;
  return out;
}

}  // namespace khid::topics
