#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>

#include "spnerf/errors.hpp"
#include "spnerf/geometry.hpp"
#include "spnerf/rng.hpp"

using namespace spnerf;

namespace {

PointCloud random_cloud(size_t n, uint64_t seed) {
  Rng rng(seed);
  PointCloud cloud;
  for (size_t i = 0; i < n; ++i) {
    cloud.positions.emplace_back(rng.next_double(), rng.next_double(), rng.next_double());
  }
  return cloud;
}

// Exhaustive all-pairs oracle for the k nearest neighbors of each point.
std::vector<std::set<uint32_t>> knn_oracle(const std::vector<Vec3>& pts, uint32_t k) {
  std::vector<std::set<uint32_t>> out(pts.size());
  for (uint32_t i = 0; i < pts.size(); ++i) {
    std::vector<std::pair<double, uint32_t>> dists;
    for (uint32_t j = 0; j < pts.size(); ++j) {
      if (j != i) dists.push_back({(pts[i] - pts[j]).squaredNorm(), j});
    }
    std::sort(dists.begin(), dists.end());
    for (uint32_t t = 0; t < k; ++t) out[i].insert(dists[t].second);
  }
  return out;
}

std::vector<std::set<uint32_t>> edge_neighbor_sets(const NeighborGraph& g) {
  std::vector<std::set<uint32_t>> out(g.node_count);
  for (const auto& e : g.edges) {
    out[e.i].insert(e.j);
    out[e.j].insert(e.i);
  }
  return out;
}

// Literal greedy reference: recompute every min-distance each round.
std::vector<uint32_t> fps_oracle(const std::vector<Vec3>& pts, uint32_t m, uint32_t seed) {
  std::vector<uint32_t> picks = {seed};
  while (picks.size() < m) {
    uint32_t best = 0;
    double best_d = -1.0;
    for (uint32_t i = 0; i < pts.size(); ++i) {
      if (std::find(picks.begin(), picks.end(), i) != picks.end()) continue;
      double d = std::numeric_limits<double>::infinity();
      for (uint32_t p : picks) d = std::min(d, (pts[i] - pts[p]).squaredNorm());
      if (d > best_d) {
        best_d = d;
        best = i;
      }
    }
    picks.push_back(best);
  }
  return picks;
}

}  // namespace

TEST_CASE("knn_graph: two points form the single possible edge") {
  PointCloud cloud;
  cloud.positions = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
  NeighborGraph g = knn_graph(cloud, 1);
  REQUIRE(g.edges.size() == 1);
  CHECK(g.edges[0].i == 0);
  CHECK(g.edges[0].j == 1);
}

TEST_CASE("knn_graph: collinear points symmetrize to two edges") {
  PointCloud cloud;
  cloud.positions = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(3, 0, 0)};
  NeighborGraph g = knn_graph(cloud, 1);
  REQUIRE(g.edges.size() == 2);
  CHECK(g.edges[0].i == 0);
  CHECK(g.edges[0].j == 1);
  CHECK(g.edges[1].i == 1);
  CHECK(g.edges[1].j == 2);
}

TEST_CASE("knn_graph: 50 random points match the exhaustive oracle") {
  PointCloud cloud = random_cloud(50, 7);
  NeighborGraph g = knn_graph(cloud, 8);
  auto oracle = knn_oracle(cloud.positions, 8);
  auto raw = knn_indices(cloud.positions, 8);
  for (uint32_t i = 0; i < 50; ++i) {
    std::set<uint32_t> got(raw[i].begin(), raw[i].end());
    CHECK(got == oracle[i]);
  }
  // Symmetrized edges contain every directed neighbor relation.
  auto sets = edge_neighbor_sets(g);
  for (uint32_t i = 0; i < 50; ++i) {
    for (uint32_t j : oracle[i]) CHECK(sets[i].count(j) == 1);
  }
}

TEST_CASE("knn_graph errors") {
  PointCloud cloud = random_cloud(5, 1);
  CHECK_THROWS_AS(knn_graph(cloud, 5), TooFewPoints);
  cloud.positions[2].x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(knn_graph(cloud, 2), NonFiniteInput);
}

TEST_CASE("knn_graph is permutation-equivariant") {
  PointCloud cloud = random_cloud(30, 11);
  NeighborGraph g1 = knn_graph(cloud, 4);

  // Reverse the point order and map expectations through the permutation.
  PointCloud reversed;
  reversed.positions.assign(cloud.positions.rbegin(), cloud.positions.rend());
  NeighborGraph g2 = knn_graph(reversed, 4);
  auto s1 = edge_neighbor_sets(g1);
  auto s2 = edge_neighbor_sets(g2);
  const uint32_t n = 30;
  for (uint32_t i = 0; i < n; ++i) {
    std::set<uint32_t> mapped;
    for (uint32_t j : s2[n - 1 - i]) mapped.insert(n - 1 - j);
    CHECK(mapped == s1[i]);
  }
}

TEST_CASE("estimate_normals: planar grid gives +z") {
  PointCloud cloud;
  for (int x = 0; x < 10; ++x) {
    for (int y = 0; y < 10; ++y) cloud.positions.emplace_back(x * 0.1, y * 0.1, 0.0);
  }
  auto normals = estimate_normals(cloud, 8);
  for (const auto& normal : normals) {
    CHECK(std::abs(normal.z()) > 0.999);
    CHECK(normal.z() > 0.0);  // sign rule: largest component positive
    CHECK(normal.norm() == doctest::Approx(1.0).epsilon(1e-5));
  }
}

TEST_CASE("estimate_normals: sphere normals are radial") {
  Rng rng(3);
  PointCloud cloud;
  for (int i = 0; i < 500; ++i) {
    Vec3 v(rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian());
    cloud.positions.push_back(v.normalized());
  }
  auto normals = estimate_normals(cloud, 12);
  int good = 0;
  for (size_t i = 0; i < cloud.size(); ++i) {
    if (std::abs(normals[i].dot(cloud.positions[i].normalized())) > 0.99) ++good;
  }
  CHECK(good >= 475);  // 95%
}

TEST_CASE("estimate_normals: coincident points are degenerate") {
  PointCloud cloud;
  cloud.positions = {Vec3(1, 2, 3), Vec3(1, 2, 3), Vec3(1, 2, 3)};
  CHECK_THROWS_AS(estimate_normals(cloud, 3), DegenerateNeighborhood);
}

TEST_CASE("farthest_point_sampling base cases") {
  std::vector<Vec3> pts = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(1, 1, 0), Vec3(0, 1, 0)};
  CHECK(farthest_point_sampling(pts, 1, 2) == std::vector<uint32_t>{2});
  auto picks = farthest_point_sampling(pts, 2, 0);
  REQUIRE(picks.size() == 2);
  CHECK(picks[0] == 0);
  CHECK(picks[1] == 2);  // opposite corner of the unit square
  CHECK_THROWS_AS(farthest_point_sampling(pts, 5, 0), SampleCountExceedsPoints);
}

TEST_CASE("farthest_point_sampling matches the greedy oracle") {
  PointCloud cloud = random_cloud(64, 21);
  auto got = farthest_point_sampling(cloud.positions, 10, 3);
  auto expect = fps_oracle(cloud.positions, 10, 3);
  CHECK(got == expect);
}

TEST_CASE("farthest_point_sampling prefix property and distinctness") {
  PointCloud cloud = random_cloud(40, 5);
  auto full = farthest_point_sampling(cloud.positions, 15, 0);
  std::set<uint32_t> unique(full.begin(), full.end());
  CHECK(unique.size() == full.size());
  for (uint32_t m = 1; m < 15; ++m) {
    auto prefix = farthest_point_sampling(cloud.positions, m, 0);
    CHECK(std::equal(prefix.begin(), prefix.end(), full.begin()));
  }
}
