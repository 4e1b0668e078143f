#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

namespace spnerf {

using Vec3 = Eigen::Vector3d;

// Sentinel class id for unlabeled / unassignable points.
inline constexpr uint32_t kIgnoreLabel = 0xffffffffu;

struct PointCloud {
  std::vector<Vec3> positions;
  std::vector<Vec3> normals;          // empty or same size as positions, unit norm
  std::vector<uint32_t> gt_labels;    // empty or same size as positions

  size_t size() const { return positions.size(); }
  bool has_normals() const { return !normals.empty(); }
  bool has_labels() const { return !gt_labels.empty(); }
};

struct NeighborGraph {
  struct Edge {
    uint32_t i, j;  // i < j
    double w;       // in [0, 1]
  };

  uint32_t node_count = 0;
  std::vector<Edge> edges;

  // CSR adjacency over the symmetrized edge set: for node v, the edge ids
  // incident to v are adjacency_edges[adjacency_offsets[v] .. adjacency_offsets[v+1]).
  std::vector<uint32_t> adjacency_offsets;
  std::vector<uint32_t> adjacency_edges;

  void build_adjacency();
};

struct SuperpointPartition {
  std::vector<uint32_t> assignment;            // per-point superpoint id in [0, superpoint_count)
  uint32_t superpoint_count = 0;
  std::vector<std::vector<uint32_t>> members;  // per-superpoint sorted point indices
};

}  // namespace spnerf
