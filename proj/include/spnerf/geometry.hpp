#pragma once

#include <cstdint>
#include <vector>

#include "spnerf/types.hpp"

namespace spnerf {

// Union-symmetrized k-nearest-neighbor graph. Ties in distance break toward
// the lower point index. Edge weights are initialized to 0; callers assign
// semantic weights afterwards. Clouds above kBruteForceLimit points use a
// grid-hash accelerator that produces the identical tie-broken neighbor sets.
NeighborGraph knn_graph(const PointCloud& cloud, uint32_t k);

inline constexpr size_t kBruteForceLimit = 20000;

// Raw per-point neighbor lists (each sorted by (distance, index), self excluded).
std::vector<std::vector<uint32_t>> knn_indices(const std::vector<Vec3>& points, uint32_t k);

// PCA normals from the k-nearest neighborhood (point itself included).
// The normal is the eigenvector of the smallest covariance eigenvalue, unit
// norm, sign fixed so its largest-magnitude component is positive.
std::vector<Vec3> estimate_normals(const PointCloud& cloud, uint32_t k);

// Greedy max-min farthest point sampling. First pick is seed_index; distance
// ties break toward the lower index.
std::vector<uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, uint32_t m,
                                              uint32_t seed_index);

}  // namespace spnerf
