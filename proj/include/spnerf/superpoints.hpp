#pragma once

#include <cstdint>

#include "spnerf/types.hpp"

namespace spnerf {

struct CutParams {
  double k_thresh = 0.05;   // scale parameter of the threshold function tau(C) = k_thresh / |C|
  uint32_t min_size = 20;   // components below this are merged in a final pass
  uint32_t knn_k = 10;
};

// Dissimilarity of two unit normals: 1 - |n_i . n_j|, sign-invariant, in [0, 1].
double normal_edge_weight(const Vec3& n_i, const Vec3& n_j);

// Graph-based segmentation: edges ascending by weight (ties by insertion
// index), merge when w <= min(Int(C1) + tau(C1), Int(C2) + tau(C2)), then a
// final pass folds components smaller than min_size into their
// lowest-weight-connected neighbor. Superpoint ids are compacted in order of
// first point occurrence.
SuperpointPartition segment(const NeighborGraph& graph, const CutParams& params);

// estimate_normals (when the cloud has none) -> knn_graph -> normal weights -> segment.
SuperpointPartition build_superpoints(const PointCloud& cloud, const CutParams& params);

}  // namespace spnerf
