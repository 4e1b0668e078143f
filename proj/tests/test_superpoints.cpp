#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "spnerf/errors.hpp"
#include "spnerf/rng.hpp"
#include "spnerf/superpoints.hpp"
#include "spnerf/synth.hpp"

using namespace spnerf;

namespace {

// Step-by-step transcription of the published merge predicate, kept naive:
// components as explicit sets, Int(C) rescanned from merged edges.
std::vector<std::set<uint32_t>> reference_segment(const NeighborGraph& graph, double k_thresh,
                                                  uint32_t min_size) {
  std::vector<std::set<uint32_t>> comps;
  for (uint32_t v = 0; v < graph.node_count; ++v) comps.push_back({v});
  std::vector<double> internal_max(graph.node_count, 0.0);

  auto comp_of = [&](uint32_t v) {
    for (size_t c = 0; c < comps.size(); ++c) {
      if (comps[c].count(v)) return c;
    }
    return comps.size();
  };
  auto merge = [&](size_t a, size_t b, double w) {
    comps[a].insert(comps[b].begin(), comps[b].end());
    internal_max[a] = std::max({internal_max[a], internal_max[b], w});
    comps.erase(comps.begin() + static_cast<long>(b));
    internal_max.erase(internal_max.begin() + static_cast<long>(b));
  };

  std::vector<uint32_t> order(graph.edges.size());
  for (uint32_t e = 0; e < order.size(); ++e) order[e] = e;
  std::stable_sort(order.begin(), order.end(),
                   [&](uint32_t a, uint32_t b) { return graph.edges[a].w < graph.edges[b].w; });

  for (uint32_t e : order) {
    size_t ca = comp_of(graph.edges[e].i);
    size_t cb = comp_of(graph.edges[e].j);
    if (ca == cb) continue;
    double ta = internal_max[ca] + k_thresh / static_cast<double>(comps[ca].size());
    double tb = internal_max[cb] + k_thresh / static_cast<double>(comps[cb].size());
    if (graph.edges[e].w <= std::min(ta, tb)) {
      merge(std::min(ca, cb), std::max(ca, cb), graph.edges[e].w);
    }
  }
  for (uint32_t e : order) {
    size_t ca = comp_of(graph.edges[e].i);
    size_t cb = comp_of(graph.edges[e].j);
    if (ca == cb) continue;
    if (comps[ca].size() < min_size || comps[cb].size() < min_size) {
      merge(std::min(ca, cb), std::max(ca, cb), graph.edges[e].w);
    }
  }
  return comps;
}

std::set<std::set<uint32_t>> as_component_sets(const SuperpointPartition& part) {
  std::set<std::set<uint32_t>> out;
  for (const auto& members : part.members) out.insert({members.begin(), members.end()});
  return out;
}

NeighborGraph random_graph(uint32_t nodes, uint64_t seed) {
  Rng rng(seed);
  NeighborGraph g;
  g.node_count = nodes;
  for (uint32_t i = 0; i < nodes; ++i) {
    for (uint32_t j = i + 1; j < nodes; ++j) {
      if (rng.next_double() < 0.4) g.edges.push_back({i, j, rng.next_double()});
    }
  }
  g.build_adjacency();
  return g;
}

}  // namespace

TEST_CASE("normal_edge_weight") {
  CHECK(normal_edge_weight(Vec3(0, 0, 1), Vec3(0, 0, 1)) == doctest::Approx(0.0));
  CHECK(normal_edge_weight(Vec3(0, 0, 1), Vec3(1, 0, 0)) == doctest::Approx(1.0));
  double s = std::sin(M_PI / 6.0), c = std::cos(M_PI / 6.0);
  CHECK(normal_edge_weight(Vec3(0, 0, 1), Vec3(0, s, c)) ==
        doctest::Approx(1.0 - c).epsilon(1e-9));
  // Sign-invariance.
  CHECK(normal_edge_weight(Vec3(0, 0, 1), Vec3(0, 0, -1)) == doctest::Approx(0.0));
  CHECK_THROWS_AS(normal_edge_weight(Vec3(0, 0, 2), Vec3(0, 0, 1)), NonUnitNormal);
}

TEST_CASE("segment: all-zero weights collapse to one superpoint") {
  NeighborGraph g;
  g.node_count = 6;
  for (uint32_t i = 0; i + 1 < 6; ++i) g.edges.push_back({i, i + 1, 0.0});
  g.build_adjacency();
  auto part = segment(g, {0.05, 1, 10});
  CHECK(part.superpoint_count == 1);
}

TEST_CASE("segment: two patches joined by one heavy edge stay apart") {
  // Two 20-node chains of weight-0 edges, bridged by a 0.5 edge.
  NeighborGraph g;
  g.node_count = 40;
  for (uint32_t i = 0; i + 1 < 20; ++i) g.edges.push_back({i, i + 1, 0.0});
  for (uint32_t i = 20; i + 1 < 40; ++i) g.edges.push_back({i, i + 1, 0.0});
  g.edges.push_back({19, 20, 0.5});
  g.build_adjacency();
  auto part = segment(g, {0.1, 1, 10});
  CHECK(part.superpoint_count == 2);
  CHECK(part.assignment[0] != part.assignment[39]);
}

TEST_CASE("segment matches the step-by-step reference on random graphs") {
  for (uint64_t seed = 0; seed < 25; ++seed) {
    NeighborGraph g = random_graph(12, seed);
    CutParams params{0.2, seed % 2 ? 3u : 1u, 10};
    auto got = as_component_sets(segment(g, params));
    auto ref = reference_segment(g, params.k_thresh, params.min_size);
    std::set<std::set<uint32_t>> expect(ref.begin(), ref.end());
    CHECK(got == expect);
  }
}

TEST_CASE("segment: empty graph rejected") {
  NeighborGraph g;
  CHECK_THROWS_AS(segment(g, {0.05, 1, 10}), EmptyGraph);
}

TEST_CASE("segment: superpoint count is monotone in k_thresh") {
  NeighborGraph g = random_graph(40, 99);
  CutParams params{0.01, 1, 10};
  uint32_t prev = std::numeric_limits<uint32_t>::max();
  for (double k : {0.01, 0.05, 0.2, 0.5, 2.0}) {
    params.k_thresh = k;
    uint32_t count = segment(g, params).superpoint_count;
    CHECK(count <= prev);
    prev = count;
  }
}

TEST_CASE("segment: partition is total and disjoint") {
  NeighborGraph g = random_graph(30, 123);
  auto part = segment(g, {0.1, 2, 10});
  std::vector<char> seen(30, 0);
  for (const auto& members : part.members) {
    for (uint32_t v : members) {
      CHECK(!seen[v]);
      seen[v] = 1;
    }
  }
  CHECK(std::count(seen.begin(), seen.end(), 1) == 30);
  for (uint32_t v = 0; v < 30; ++v) CHECK(part.assignment[v] < part.superpoint_count);
}

TEST_CASE("build_superpoints: single plane collapses to one superpoint") {
  SceneSpec spec;
  SceneObject plane;
  plane.shape = SceneObject::Shape::kPlane;
  plane.center = Vec3(0, 0, 0);
  plane.size = Vec3(1, 1, 0);
  spec.objects = {plane};
  spec.points_per_m2 = 300;
  spec.sigma_geom = 0.0;
  spec.seed = 4;
  PointCloud cloud = generate_scene(spec);
  auto part = build_superpoints(cloud, {0.05, 5, 10});
  CHECK(part.superpoint_count == 1);
}

TEST_CASE("build_superpoints: two disconnected parallel planes stay separate") {
  SceneSpec spec;
  SceneObject plane;
  plane.shape = SceneObject::Shape::kPlane;
  plane.center = Vec3(0, 0, 0);
  plane.size = Vec3(1, 1, 0);
  plane.class_id = 0;
  SceneObject plane2 = plane;
  plane2.center = Vec3(0, 0, 1.0);
  plane2.class_id = 1;
  spec.objects = {plane, plane2};
  spec.points_per_m2 = 300;
  spec.sigma_geom = 0.0;
  spec.seed = 4;
  PointCloud cloud = generate_scene(spec);
  auto part = build_superpoints(cloud, {0.05, 5, 8});
  CHECK(part.superpoint_count == 2);
  // Superpoints match the generating planes exactly.
  for (size_t i = 0; i < cloud.size(); ++i) {
    CHECK(part.assignment[i] == part.assignment[cloud.gt_labels[i] == 0 ? 0 : cloud.size() - 1]);
  }
}

TEST_CASE("build_superpoints: box faces produce face-coherent superpoints") {
  SceneSpec spec;
  SceneObject box;
  box.shape = SceneObject::Shape::kBox;
  box.center = Vec3(0, 0, 0);
  box.size = Vec3(1, 1, 1);
  spec.objects = {box};
  spec.points_per_m2 = 100;  // 6 faces -> ~600 points
  spec.sigma_geom = 0.0;
  spec.seed = 9;
  PointCloud cloud = generate_scene(spec);

  // Face id from the analytic normal.
  auto face_of = [&](size_t i) {
    const Vec3& n = cloud.normals[i];
    int axis;
    n.cwiseAbs().maxCoeff(&axis);
    return axis * 2 + (n[axis] > 0 ? 0 : 1);
  };

  auto part = build_superpoints(cloud, {0.05, 5, 10});
  CHECK(part.superpoint_count >= 6);
  CHECK(part.superpoint_count <= 12);

  size_t same_sp = 0, same_sp_same_face = 0;
  for (size_t i = 0; i < cloud.size(); ++i) {
    for (size_t j = i + 1; j < cloud.size(); ++j) {
      if (part.assignment[i] == part.assignment[j]) {
        ++same_sp;
        if (face_of(i) == face_of(j)) ++same_sp_same_face;
      }
    }
  }
  CHECK(static_cast<double>(same_sp_same_face) >= 0.95 * static_cast<double>(same_sp));
}

TEST_CASE("segment is deterministic across runs") {
  NeighborGraph g = random_graph(25, 77);
  auto a = segment(g, {0.1, 3, 10});
  auto b = segment(g, {0.1, 3, 10});
  CHECK(a.assignment == b.assignment);
}
