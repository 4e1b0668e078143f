#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spnerf/featurefield.hpp"
#include "spnerf/merging.hpp"
#include "spnerf/types.hpp"

namespace spnerf {

// Deterministic synthetic scenes standing in for scanned indoor clouds.
struct SceneObject {
  enum class Shape { kPlane, kBox, kSphere };
  Shape shape = Shape::kPlane;
  Vec3 center = Vec3::Zero();
  Vec3 size = Vec3::Ones();  // plane: in-plane extents + normal axis, box: edge lengths, sphere: x = radius
  int plane_axis = 2;        // normal axis for planes
  double plane_sign = 1.0;   // which side the plane normal points to
  uint32_t class_id = 0;
};

struct SceneSpec {
  std::vector<SceneObject> objects;
  double points_per_m2 = 400.0;
  double sigma_geom = 0.005;
  uint64_t seed = 1;
};

struct GridParams {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.1;
  std::array<uint32_t, 3> dims = {2, 2, 2};
  uint32_t scales = 3;
};

struct EmbeddingModel {
  uint32_t dim = 16;
  std::vector<std::vector<double>> prototypes;  // per class, unit norm
  double sigma_emb = 0.1;
  double ray_fraction = 1.0;  // fraction of points given ray supervision
  uint64_t seed = 1;
};

// Surface-sampled cloud with gt labels and analytic (pre-jitter) normals.
PointCloud generate_scene(const SceneSpec& spec);

// Random unit prototypes with pairwise |cosine| <= 0.5.
std::vector<std::vector<double>> make_prototypes(uint32_t class_count, uint32_t dim, uint64_t seed);

struct PaintedScene {
  FeatureField field;          // initialized, untrained
  LabelBank bank;              // f_pos = prototypes, 2 canonical negatives
  SupervisionData supervision;
};

// Supervision targets are normalize(prototype[gt] + sigma_emb * gaussian);
// each supervised point gets a short ray along its analytic normal.
PaintedScene paint_field(const PointCloud& cloud, const EmbeddingModel& model,
                         const GridParams& grid);

// Floor + two walls + two boxes + one sphere, six classes.
SceneSpec default_desk_scene(uint64_t seed);

// Grid that covers the cloud's bounding box with a margin.
GridParams fit_grid(const PointCloud& cloud, double voxel_size, uint32_t scales, double margin);

SceneSpec scene_spec_from_json(const std::string& json_text);
std::string scene_spec_to_json(const SceneSpec& spec);

}  // namespace spnerf
