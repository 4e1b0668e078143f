#include "spnerf/synth.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "spnerf/errors.hpp"
#include "spnerf/rng.hpp"

namespace spnerf {

namespace {

using nlohmann::json;

void normalize(std::vector<double>& v) {
  double n = 0.0;
  for (double x : v) n += x * x;
  n = std::sqrt(n);
  if (n < 1e-12) throw ZeroVector("cannot normalize zero vector");
  for (double& x : v) x /= n;
}

struct Sample {
  Vec3 pos;
  Vec3 normal;
};

double object_area(const SceneObject& obj) {
  switch (obj.shape) {
    case SceneObject::Shape::kPlane: {
      int a = (obj.plane_axis + 1) % 3, b = (obj.plane_axis + 2) % 3;
      return obj.size[a] * obj.size[b];
    }
    case SceneObject::Shape::kBox:
      return 2.0 * (obj.size.x() * obj.size.y() + obj.size.y() * obj.size.z() +
                    obj.size.z() * obj.size.x());
    case SceneObject::Shape::kSphere:
      return 4.0 * M_PI * obj.size.x() * obj.size.x();
  }
  return 0.0;
}

Sample sample_plane(const SceneObject& obj, Rng& rng) {
  int ax = obj.plane_axis;
  int a = (ax + 1) % 3, b = (ax + 2) % 3;
  Sample s;
  s.pos = obj.center;
  s.pos[a] += (rng.next_double() - 0.5) * obj.size[a];
  s.pos[b] += (rng.next_double() - 0.5) * obj.size[b];
  s.normal = Vec3::Zero();
  s.normal[ax] = obj.plane_sign >= 0.0 ? 1.0 : -1.0;
  return s;
}

Sample sample_box(const SceneObject& obj, Rng& rng) {
  // Face picked proportional to its area.
  double ax = obj.size.y() * obj.size.z();
  double ay = obj.size.z() * obj.size.x();
  double az = obj.size.x() * obj.size.y();
  double total = 2.0 * (ax + ay + az);
  double u = rng.next_double() * total;
  int axis;
  double sign;
  if (u < 2.0 * ax) {
    axis = 0;
    sign = u < ax ? 1.0 : -1.0;
  } else if (u < 2.0 * ax + 2.0 * ay) {
    axis = 1;
    sign = (u - 2.0 * ax) < ay ? 1.0 : -1.0;
  } else {
    axis = 2;
    sign = (u - 2.0 * ax - 2.0 * ay) < az ? 1.0 : -1.0;
  }
  int a = (axis + 1) % 3, b = (axis + 2) % 3;
  Sample s;
  s.pos = obj.center;
  s.pos[axis] += sign * 0.5 * obj.size[axis];
  s.pos[a] += (rng.next_double() - 0.5) * obj.size[a];
  s.pos[b] += (rng.next_double() - 0.5) * obj.size[b];
  s.normal = Vec3::Zero();
  s.normal[axis] = sign;
  return s;
}

Sample sample_sphere(const SceneObject& obj, Rng& rng) {
  // Area-uniform via uniform z and angle.
  double z = 2.0 * rng.next_double() - 1.0;
  double phi = 2.0 * M_PI * rng.next_double();
  double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  Vec3 dir(r * std::cos(phi), r * std::sin(phi), z);
  Sample s;
  s.normal = dir;
  s.pos = obj.center + obj.size.x() * dir;
  return s;
}

}  // namespace

PointCloud generate_scene(const SceneSpec& spec) {
  if (spec.objects.empty()) throw EmptySpec("scene has no objects");
  if (spec.points_per_m2 <= 0.0) throw ConfigError("points_per_m2 must be positive");
  PointCloud cloud;
  for (size_t oi = 0; oi < spec.objects.size(); ++oi) {
    const SceneObject& obj = spec.objects[oi];
    Rng rng = Rng::substream(spec.seed, 0xabcd0000ULL + oi);
    uint64_t n = static_cast<uint64_t>(std::llround(object_area(obj) * spec.points_per_m2));
    n = std::max<uint64_t>(n, 1);
    for (uint64_t t = 0; t < n; ++t) {
      Sample s;
      switch (obj.shape) {
        case SceneObject::Shape::kPlane: s = sample_plane(obj, rng); break;
        case SceneObject::Shape::kBox: s = sample_box(obj, rng); break;
        case SceneObject::Shape::kSphere: s = sample_sphere(obj, rng); break;
      }
      if (spec.sigma_geom > 0.0) {
        s.pos += spec.sigma_geom * Vec3(rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian());
      }
      cloud.positions.push_back(s.pos);
      cloud.normals.push_back(s.normal);
      cloud.gt_labels.push_back(obj.class_id);
    }
  }
  return cloud;
}

std::vector<std::vector<double>> make_prototypes(uint32_t class_count, uint32_t dim,
                                                 uint64_t seed) {
  if (class_count == 0 || dim == 0) throw ConfigError("class_count and dim must be positive");
  Rng rng = Rng::substream(seed, 0x9e0707ULL);
  std::vector<std::vector<double>> protos;
  const int max_attempts = 100000;
  int attempts = 0;
  while (protos.size() < class_count) {
    if (++attempts > max_attempts) {
      throw PrototypeSeparationFailure("could not satisfy pairwise cosine bound");
    }
    std::vector<double> v(dim);
    for (double& x : v) x = rng.next_gaussian();
    normalize(v);
    bool ok = true;
    for (const auto& p : protos) {
      double dot = 0.0;
      for (uint32_t d = 0; d < dim; ++d) dot += v[d] * p[d];
      if (std::abs(dot) > 0.5) {
        ok = false;
        break;
      }
    }
    if (ok) protos.push_back(std::move(v));
  }
  return protos;
}

GridParams fit_grid(const PointCloud& cloud, double voxel_size, uint32_t scales, double margin) {
  if (cloud.positions.empty()) throw EmptySpec("empty cloud");
  Vec3 lo = cloud.positions[0], hi = cloud.positions[0];
  for (const Vec3& p : cloud.positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  GridParams g;
  g.voxel_size = voxel_size;
  g.scales = scales;
  g.origin = lo - Vec3::Constant(margin);
  Vec3 extent = hi - lo + Vec3::Constant(2.0 * margin);
  for (int a = 0; a < 3; ++a) {
    g.dims[a] = std::max<uint32_t>(2, static_cast<uint32_t>(std::ceil(extent[a] / voxel_size)) + 1);
  }
  return g;
}

PaintedScene paint_field(const PointCloud& cloud, const EmbeddingModel& model,
                         const GridParams& grid) {
  if (!cloud.has_labels() || !cloud.has_normals()) {
    throw ConfigError("paint_field needs labels and normals");
  }
  if (model.prototypes.empty()) throw ConfigError("embedding model has no prototypes");
  const uint32_t dim = model.dim;

  PaintedScene out;
  out.field = FeatureField::create(grid.origin, grid.voxel_size, grid.dims, grid.scales, dim);
  // Small random embedding init keeps the rendered-norm defined from the start.
  Rng init_rng = Rng::substream(model.seed, 0x11117777ULL);
  for (double& v : out.field.embeddings) v = 0.01 * init_rng.next_gaussian();

  for (const auto& proto : model.prototypes) {
    if (proto.size() != dim) throw ConfigError("prototype dimension mismatch");
  }
  for (uint32_t c = 0; c < model.prototypes.size(); ++c) {
    out.bank.classes.push_back({"class_" + std::to_string(c), model.prototypes[c]});
  }
  // Negatives stand in for canonical text: the prototype mean plus one random direction.
  std::vector<double> mean(dim, 0.0);
  for (const auto& proto : model.prototypes) {
    for (uint32_t d = 0; d < dim; ++d) mean[d] += proto[d];
  }
  for (double& v : mean) v /= static_cast<double>(model.prototypes.size());
  double mean_norm = 0.0;
  for (double v : mean) mean_norm += v * v;
  if (mean_norm < 1e-12) mean.assign(dim, 0.0), mean[0] = 1.0;
  normalize(mean);
  Rng neg_rng = Rng::substream(model.seed, 0x22228888ULL);
  std::vector<double> random_neg(dim);
  for (double& v : random_neg) v = neg_rng.next_gaussian();
  normalize(random_neg);
  out.bank.negatives = {mean, random_neg};

  if (!(model.ray_fraction > 0.0 && model.ray_fraction <= 1.0)) {
    throw ConfigError("ray_fraction must lie in (0, 1]");
  }
  Rng emb_rng = Rng::substream(model.seed, 0x3333aaaaULL);
  Rng pick_rng = Rng::substream(model.seed, 0x4444bbbbULL);
  out.supervision.surface_points = cloud.positions;
  out.supervision.rays.reserve(cloud.size());
  out.supervision.ray_targets.reserve(cloud.size());
  for (size_t i = 0; i < cloud.size(); ++i) {
    uint32_t cls = cloud.gt_labels[i];
    if (cls == kIgnoreLabel || cls >= model.prototypes.size()) {
      throw LabelOutOfRange("scene label exceeds prototype count");
    }
    if (model.ray_fraction < 1.0 && pick_rng.next_double() >= model.ray_fraction) continue;
    std::vector<double> target = model.prototypes[cls];
    if (model.sigma_emb > 0.0) {
      for (double& v : target) v += model.sigma_emb * emb_rng.next_gaussian();
    }
    normalize(target);
    out.supervision.ray_targets.push_back(std::move(target));

    Ray ray;
    ray.direction = -cloud.normals[i];
    ray.origin = cloud.positions[i] - 0.3 * ray.direction;
    ray.t_near = 0.05;
    ray.t_far = 0.55;
    ray.sample_count = 16;
    out.supervision.rays.push_back(ray);
  }
  return out;
}

SceneSpec default_desk_scene(uint64_t seed) {
  SceneSpec spec;
  spec.seed = seed;
  spec.points_per_m2 = 500.0;
  spec.sigma_geom = 0.005;

  SceneObject floor;
  floor.shape = SceneObject::Shape::kPlane;
  floor.center = Vec3(2.0, 2.0, 0.0);
  floor.size = Vec3(4.0, 4.0, 0.0);
  floor.plane_axis = 2;
  floor.plane_sign = 1.0;
  floor.class_id = 0;

  SceneObject wall_x;
  wall_x.shape = SceneObject::Shape::kPlane;
  wall_x.center = Vec3(0.0, 2.0, 1.25);
  wall_x.size = Vec3(0.0, 4.0, 2.5);
  wall_x.plane_axis = 0;
  wall_x.plane_sign = 1.0;
  wall_x.class_id = 1;

  SceneObject wall_y;
  wall_y.shape = SceneObject::Shape::kPlane;
  wall_y.center = Vec3(2.0, 0.0, 1.25);
  wall_y.size = Vec3(4.0, 0.0, 2.5);
  wall_y.plane_axis = 1;
  wall_y.plane_sign = 1.0;
  wall_y.class_id = 2;

  SceneObject box_a;
  box_a.shape = SceneObject::Shape::kBox;
  box_a.center = Vec3(1.2, 1.4, 0.55);
  box_a.size = Vec3(0.8, 0.8, 0.8);
  box_a.class_id = 3;

  SceneObject box_b;
  box_b.shape = SceneObject::Shape::kBox;
  box_b.center = Vec3(3.0, 2.8, 0.45);
  box_b.size = Vec3(0.9, 0.6, 0.6);
  box_b.class_id = 4;

  SceneObject ball;
  ball.shape = SceneObject::Shape::kSphere;
  ball.center = Vec3(2.2, 3.2, 0.6);
  ball.size = Vec3(0.45, 0.45, 0.45);
  ball.class_id = 5;

  spec.objects = {floor, wall_x, wall_y, box_a, box_b, ball};
  return spec;
}

SceneSpec scene_spec_from_json(const std::string& json_text) {
  json j = json::parse(json_text);
  SceneSpec spec;
  const std::vector<std::string> allowed = {"objects", "points_per_m2", "sigma_geom", "seed"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError("unknown scene spec key: " + it.key());
    }
  }
  spec.points_per_m2 = j.value("points_per_m2", spec.points_per_m2);
  spec.sigma_geom = j.value("sigma_geom", spec.sigma_geom);
  spec.seed = j.value("seed", spec.seed);
  if (!j.contains("objects") || !j["objects"].is_array() || j["objects"].empty()) {
    throw EmptySpec("scene spec needs a non-empty objects array");
  }
  for (const auto& jo : j["objects"]) {
    SceneObject obj;
    std::string shape = jo.at("shape").get<std::string>();
    if (shape == "plane") {
      obj.shape = SceneObject::Shape::kPlane;
    } else if (shape == "box") {
      obj.shape = SceneObject::Shape::kBox;
    } else if (shape == "sphere") {
      obj.shape = SceneObject::Shape::kSphere;
    } else {
      throw ConfigError("unknown shape: " + shape);
    }
    auto center = jo.at("center");
    obj.center = Vec3(center[0], center[1], center[2]);
    auto size = jo.at("size");
    if (size.is_array()) {
      obj.size = Vec3(size[0], size[1], size[2]);
    } else {
      obj.size = Vec3::Constant(size.get<double>());
    }
    obj.plane_axis = jo.value("plane_axis", 2);
    obj.plane_sign = jo.value("plane_sign", 1.0);
    obj.class_id = jo.at("class").get<uint32_t>();
    spec.objects.push_back(obj);
  }
  return spec;
}

std::string scene_spec_to_json(const SceneSpec& spec) {
  json j;
  j["points_per_m2"] = spec.points_per_m2;
  j["sigma_geom"] = spec.sigma_geom;
  j["seed"] = spec.seed;
  j["objects"] = json::array();
  for (const auto& obj : spec.objects) {
    json jo;
    switch (obj.shape) {
      case SceneObject::Shape::kPlane: jo["shape"] = "plane"; break;
      case SceneObject::Shape::kBox: jo["shape"] = "box"; break;
      case SceneObject::Shape::kSphere: jo["shape"] = "sphere"; break;
    }
    jo["center"] = {obj.center.x(), obj.center.y(), obj.center.z()};
    jo["size"] = {obj.size.x(), obj.size.y(), obj.size.z()};
    jo["plane_axis"] = obj.plane_axis;
    jo["plane_sign"] = obj.plane_sign;
    jo["class"] = obj.class_id;
    j["objects"].push_back(jo);
  }
  return j.dump(2);
}

}  // namespace spnerf
