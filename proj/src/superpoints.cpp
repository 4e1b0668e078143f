#include "spnerf/superpoints.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spnerf/errors.hpp"
#include "spnerf/geometry.hpp"

namespace spnerf {

namespace {

// Union-find with path compression and union-by-size. Equal sizes: the lower
// root id absorbs the higher one.
class UnionFind {
 public:
  explicit UnionFind(uint32_t n) : parent_(n), size_(n, 1) {
    std::iota(parent_.begin(), parent_.end(), 0u);
  }

  uint32_t find(uint32_t x) {
    uint32_t root = x;
    while (parent_[root] != root) root = parent_[root];
    while (parent_[x] != root) {
      uint32_t next = parent_[x];
      parent_[x] = root;
      x = next;
    }
    return root;
  }

  uint32_t unite(uint32_t a, uint32_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return a;
    if (size_[a] < size_[b] || (size_[a] == size_[b] && b < a)) std::swap(a, b);
    parent_[b] = a;
    size_[a] += size_[b];
    return a;
  }

  uint32_t size(uint32_t x) { return size_[find(x)]; }

 private:
  std::vector<uint32_t> parent_;
  std::vector<uint32_t> size_;
};

}  // namespace

double normal_edge_weight(const Vec3& n_i, const Vec3& n_j) {
  if (std::abs(n_i.norm() - 1.0) > 1e-3 || std::abs(n_j.norm() - 1.0) > 1e-3) {
    throw NonUnitNormal("edge weight inputs must be unit normals");
  }
  double w = 1.0 - std::abs(n_i.dot(n_j));
  return std::clamp(w, 0.0, 1.0);
}

SuperpointPartition segment(const NeighborGraph& graph, const CutParams& params) {
  if (graph.node_count == 0) throw EmptyGraph();
  if (params.k_thresh <= 0.0 || params.min_size < 1) throw ConfigError("invalid CutParams");
  const uint32_t n = graph.node_count;

  std::vector<uint32_t> order(graph.edges.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    return graph.edges[a].w < graph.edges[b].w;
  });

  UnionFind uf(n);
  // Per-component internal threshold Int(C) + tau(C), indexed by current root.
  std::vector<double> threshold(n, params.k_thresh);
  for (uint32_t e : order) {
    const auto& edge = graph.edges[e];
    uint32_t a = uf.find(edge.i);
    uint32_t b = uf.find(edge.j);
    if (a == b) continue;
    if (edge.w <= threshold[a] && edge.w <= threshold[b]) {
      uint32_t root = uf.unite(a, b);
      threshold[root] = edge.w + params.k_thresh / static_cast<double>(uf.size(root));
    }
  }

  // Fold small components into their lowest-weight-connected neighbor.
  for (uint32_t e : order) {
    const auto& edge = graph.edges[e];
    uint32_t a = uf.find(edge.i);
    uint32_t b = uf.find(edge.j);
    if (a == b) continue;
    if (uf.size(a) < params.min_size || uf.size(b) < params.min_size) uf.unite(a, b);
  }

  SuperpointPartition part;
  part.assignment.resize(n);
  std::vector<uint32_t> compact(n, kIgnoreLabel);
  uint32_t next_id = 0;
  for (uint32_t v = 0; v < n; ++v) {
    uint32_t root = uf.find(v);
    if (compact[root] == kIgnoreLabel) compact[root] = next_id++;
    part.assignment[v] = compact[root];
  }
  part.superpoint_count = next_id;
  part.members.resize(next_id);
  for (uint32_t v = 0; v < n; ++v) part.members[part.assignment[v]].push_back(v);
  return part;
}

SuperpointPartition build_superpoints(const PointCloud& cloud, const CutParams& params) {
  if (cloud.size() < 2) throw TooFewPoints("build_superpoints needs >= 2 points");
  PointCloud working = cloud;
  if (!working.has_normals()) working.normals = estimate_normals(working, params.knn_k);

  NeighborGraph graph = knn_graph(working, params.knn_k);
  for (auto& e : graph.edges) e.w = normal_edge_weight(working.normals[e.i], working.normals[e.j]);
  return segment(graph, params);
}

}  // namespace spnerf
