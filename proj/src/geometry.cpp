#include "spnerf/geometry.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>
#include <unordered_map>

#include "spnerf/errors.hpp"

namespace spnerf {

void NeighborGraph::build_adjacency() {
  adjacency_offsets.assign(node_count + 1, 0);
  for (const Edge& e : edges) {
    ++adjacency_offsets[e.i + 1];
    ++adjacency_offsets[e.j + 1];
  }
  for (uint32_t v = 0; v < node_count; ++v) {
    adjacency_offsets[v + 1] += adjacency_offsets[v];
  }
  adjacency_edges.resize(adjacency_offsets.back());
  std::vector<uint32_t> cursor(adjacency_offsets.begin(), adjacency_offsets.end() - 1);
  for (uint32_t e = 0; e < edges.size(); ++e) {
    adjacency_edges[cursor[edges[e].i]++] = e;
    adjacency_edges[cursor[edges[e].j]++] = e;
  }
}

namespace {

struct Candidate {
  double d2;
  uint32_t index;
};

bool candidate_less(const Candidate& a, const Candidate& b) {
  if (a.d2 != b.d2) return a.d2 < b.d2;
  return a.index < b.index;
}

std::vector<std::vector<uint32_t>> knn_brute(const std::vector<Vec3>& pts, uint32_t k) {
  const size_t n = pts.size();
  std::vector<std::vector<uint32_t>> result(n);
  std::vector<Candidate> cand;
  cand.reserve(n - 1);
  for (size_t i = 0; i < n; ++i) {
    cand.clear();
    for (size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      cand.push_back({(pts[i] - pts[j]).squaredNorm(), static_cast<uint32_t>(j)});
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), candidate_less);
    result[i].reserve(k);
    for (uint32_t t = 0; t < k; ++t) result[i].push_back(cand[t].index);
  }
  return result;
}

struct CellKey {
  int64_t x, y, z;
  bool operator==(const CellKey& o) const { return x == o.x && y == o.y && z == o.z; }
};

struct CellKeyHash {
  size_t operator()(const CellKey& c) const {
    uint64_t h = static_cast<uint64_t>(c.x) * 0x9e3779b97f4a7c15ULL;
    h ^= static_cast<uint64_t>(c.y) * 0xc2b2ae3d27d4eb4fULL;
    h ^= static_cast<uint64_t>(c.z) * 0x165667b19e3779f9ULL;
    return static_cast<size_t>(h ^ (h >> 29));
  }
};

// Grid-hash kNN. Exact: rings are expanded until the ring's lower distance
// bound exceeds the current k-th best, and candidates use the same
// (distance, index) comparator as the brute-force path.
std::vector<std::vector<uint32_t>> knn_grid(const std::vector<Vec3>& pts, uint32_t k) {
  const size_t n = pts.size();
  Vec3 lo = pts[0], hi = pts[0];
  for (const Vec3& p : pts) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  Vec3 extent = (hi - lo).cwiseMax(1e-9);
  double volume = extent.x() * extent.y() * extent.z();
  double cell = std::cbrt(volume / static_cast<double>(n)) * 2.0;
  if (!(cell > 0.0) || !std::isfinite(cell)) cell = 1.0;

  std::unordered_map<CellKey, std::vector<uint32_t>, CellKeyHash> grid;
  grid.reserve(n);
  auto key_of = [&](const Vec3& p) {
    return CellKey{static_cast<int64_t>(std::floor((p.x() - lo.x()) / cell)),
                   static_cast<int64_t>(std::floor((p.y() - lo.y()) / cell)),
                   static_cast<int64_t>(std::floor((p.z() - lo.z()) / cell))};
  };
  for (size_t i = 0; i < n; ++i) grid[key_of(pts[i])].push_back(static_cast<uint32_t>(i));

  std::vector<std::vector<uint32_t>> result(n);
  std::vector<Candidate> cand;
  for (size_t i = 0; i < n; ++i) {
    const CellKey center = key_of(pts[i]);
    cand.clear();
    for (int64_t ring = 0;; ++ring) {
      // Lower bound on the distance from p to any cell at Chebyshev ring r.
      if (ring > 0 && cand.size() >= k) {
        std::nth_element(cand.begin(), cand.begin() + (k - 1), cand.end(), candidate_less);
        double kth = cand[k - 1].d2;
        double bound = (static_cast<double>(ring) - 1.0) * cell;
        if (bound * bound > kth) break;
      }
      bool any_cell = false;
      for (int64_t dx = -ring; dx <= ring; ++dx) {
        for (int64_t dy = -ring; dy <= ring; ++dy) {
          for (int64_t dz = -ring; dz <= ring; ++dz) {
            if (std::max({std::llabs(dx), std::llabs(dy), std::llabs(dz)}) != ring) continue;
            auto it = grid.find(CellKey{center.x + dx, center.y + dy, center.z + dz});
            if (it == grid.end()) continue;
            any_cell = true;
            for (uint32_t j : it->second) {
              if (j == i) continue;
              cand.push_back({(pts[i] - pts[j]).squaredNorm(), j});
            }
          }
        }
      }
      (void)any_cell;
      if (ring > static_cast<int64_t>(n)) break;  // unreachable guard
    }
    std::partial_sort(cand.begin(), cand.begin() + k, cand.end(), candidate_less);
    result[i].reserve(k);
    for (uint32_t t = 0; t < k; ++t) result[i].push_back(cand[t].index);
  }
  return result;
}

void check_finite(const std::vector<Vec3>& pts) {
  for (const Vec3& p : pts) {
    if (!p.allFinite()) throw NonFiniteInput("point coordinates must be finite");
  }
}

}  // namespace

std::vector<std::vector<uint32_t>> knn_indices(const std::vector<Vec3>& points, uint32_t k) {
  return points.size() <= kBruteForceLimit ? knn_brute(points, k) : knn_grid(points, k);
}

NeighborGraph knn_graph(const PointCloud& cloud, uint32_t k) {
  const size_t n = cloud.size();
  if (n < 2 || n <= k) throw TooFewPoints("need point count > k and >= 2");
  check_finite(cloud.positions);

  auto nbrs = knn_indices(cloud.positions, k);

  NeighborGraph g;
  g.node_count = static_cast<uint32_t>(n);
  g.edges.reserve(n * k);
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j : nbrs[i]) {
      uint32_t a = std::min(i, j), b = std::max(i, j);
      g.edges.push_back({a, b, 0.0});
    }
  }
  std::sort(g.edges.begin(), g.edges.end(), [](const NeighborGraph::Edge& a, const NeighborGraph::Edge& b) {
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  g.edges.erase(std::unique(g.edges.begin(), g.edges.end(),
                            [](const NeighborGraph::Edge& a, const NeighborGraph::Edge& b) {
                              return a.i == b.i && a.j == b.j;
                            }),
                g.edges.end());
  g.build_adjacency();
  return g;
}

std::vector<Vec3> estimate_normals(const PointCloud& cloud, uint32_t k) {
  const size_t n = cloud.size();
  if (k < 3) throw ConfigError("estimate_normals requires k >= 3");
  if (n < 3) throw TooFewPoints("need at least 3 points for normals");
  check_finite(cloud.positions);

  uint32_t kk = static_cast<uint32_t>(std::min<size_t>(k, n - 1));
  auto nbrs = knn_indices(cloud.positions, kk);

  std::vector<Vec3> normals(n);
  for (size_t i = 0; i < n; ++i) {
    Vec3 mean = cloud.positions[i];
    for (uint32_t j : nbrs[i]) mean += cloud.positions[j];
    mean /= static_cast<double>(nbrs[i].size() + 1);

    Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
    Vec3 d = cloud.positions[i] - mean;
    cov += d * d.transpose();
    for (uint32_t j : nbrs[i]) {
      d = cloud.positions[j] - mean;
      cov += d * d.transpose();
    }
    cov /= static_cast<double>(nbrs[i].size() + 1);

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
    const auto& evals = eig.eigenvalues();  // ascending
    // Rank < 2: fewer than two spread directions, the plane is undefined.
    if (evals[1] <= 1e-18) throw DegenerateNeighborhood("neighborhood covariance rank < 2");

    Vec3 normal = eig.eigenvectors().col(0);
    normal.normalize();
    int axis = 0;
    normal.cwiseAbs().maxCoeff(&axis);
    if (normal[axis] < 0.0) normal = -normal;
    normals[i] = normal;
  }
  return normals;
}

std::vector<uint32_t> farthest_point_sampling(const std::vector<Vec3>& points, uint32_t m,
                                              uint32_t seed_index) {
  const size_t n = points.size();
  if (m > n) throw SampleCountExceedsPoints("m exceeds point count");
  if (m == 0) return {};
  if (seed_index >= n) throw ConfigError("seed_index out of range");
  check_finite(points);

  std::vector<uint32_t> picks;
  picks.reserve(m);
  picks.push_back(seed_index);
  std::vector<char> picked(n, 0);
  picked[seed_index] = 1;
  std::vector<double> min_d2(n, std::numeric_limits<double>::infinity());
  for (uint32_t round = 1; round < m; ++round) {
    uint32_t last = picks.back();
    uint32_t best = 0;
    double best_d2 = -1.0;
    for (uint32_t i = 0; i < n; ++i) {
      if (picked[i]) continue;
      double d2 = (points[i] - points[last]).squaredNorm();
      if (d2 < min_d2[i]) min_d2[i] = d2;
      if (min_d2[i] > best_d2) {
        best_d2 = min_d2[i];
        best = i;
      }
    }
    picks.push_back(best);
    picked[best] = 1;
  }
  return picks;
}

}  // namespace spnerf
