#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spnerf/types.hpp"

namespace spnerf {

// Eight grid nodes bracketing a query position with their trilinear weights.
struct TrilinearStencil {
  std::array<size_t, 8> node;
  std::array<double, 8> weight;
};

// Multi-scale dense voxel grid of embeddings plus a scalar density grid.
// Grid nodes sit at origin + index * voxel_size; queries are defined on
// [origin, origin + (dims - 1) * voxel_size]. Density is softplus(raw) per
// node, interpolated trilinearly, so sigma >= 0 everywhere.
struct FeatureField {
  Vec3 origin = Vec3::Zero();
  double voxel_size = 1.0;
  std::array<uint32_t, 3> dims = {2, 2, 2};
  uint32_t scale_count = 1;
  uint32_t embed_dim = 1;

  std::vector<double> raw_density;  // node-major, x fastest
  std::vector<double> embeddings;   // scale-major, then node-major, then channel

  static FeatureField create(const Vec3& origin, double voxel_size,
                             std::array<uint32_t, 3> dims, uint32_t scales, uint32_t dim);

  size_t node_count() const {
    return static_cast<size_t>(dims[0]) * dims[1] * dims[2];
  }
  size_t node_index(uint32_t x, uint32_t y, uint32_t z) const {
    return (static_cast<size_t>(z) * dims[1] + y) * dims[0] + x;
  }
  size_t embedding_offset(uint32_t scale, size_t node) const {
    return (static_cast<size_t>(scale) * node_count() + node) * embed_dim;
  }

  bool in_bounds(const Vec3& x) const;
  TrilinearStencil stencil(const Vec3& x) const;  // throws OutOfBounds

  // Trilinear embedding lookup at one scale.
  std::vector<double> query(const Vec3& x, uint32_t scale) const;
  void query_into(const Vec3& x, uint32_t scale, std::span<double> out) const;

  // Interpolated density sigma(x) >= 0.
  double density(const Vec3& x) const;
};

struct Ray {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();  // unit norm
  double t_near = 0.0;
  double t_far = 1.0;
  uint32_t sample_count = 16;
};

struct RenderResult {
  std::vector<double> embedding;  // unit norm
  double weight_sum = 0.0;
};

// Midpoint quadrature of the volumetric embedding integral: at each sample,
// alpha = 1 - exp(-sigma * dt), weight = T * alpha with T the accumulated
// transmittance; the weighted embedding sum is normalized to the unit sphere.
// Samples outside the grid contribute sigma = 0. Throws DegenerateRay when
// weight_sum < 1e-6.
RenderResult render_ray(const FeatureField& field, const Ray& ray, uint32_t scale);

// Losses. Batch forms live in the trainer below.
double loss_lang(std::span<const double> rendered, std::span<const double> target, double lambda_lang);
double loss_consistency_pair(std::span<const double> f_i, std::span<const double> f_j, double delta);
double loss_density(const FeatureField& field, const std::vector<Vec3>& surface_points);

struct PairSample {
  uint32_t i, j;  // point indices within one superpoint
};

double loss_consistency_batch(const FeatureField& field, const std::vector<Vec3>& positions,
                              const std::vector<PairSample>& pairs, double delta);

struct TrainConfig {
  double lambda_lang = 1.0;
  double lambda_c = 0.1;
  double lambda_d = 0.1;
  double huber_delta = 0.25;
  double learning_rate = 0.05;
  uint32_t stage1_end = 0;   // iterations < stage1_end: density loss only
  uint32_t stage2_end = 0;   // < stage2_end: + language loss; after: + consistency
  uint32_t total_iters = 0;
  uint64_t seed = 0;
  uint32_t ray_batch = 256;
  uint32_t point_batch = 1024;
  uint32_t pair_batch = 256;
};

// Ray supervision plus density supervision targets.
struct SupervisionData {
  std::vector<Ray> rays;                         // one per supervised surface point
  std::vector<std::vector<double>> ray_targets;  // unit vectors, parallel to rays
  std::vector<Vec3> surface_points;
};

struct LossLogRow {
  uint32_t iteration = 0;
  int stage = 1;
  double density = 0.0;
  double lang = 0.0;
  double consistency = 0.0;
};

struct TrainResult {
  std::vector<LossLogRow> log;
};

// Sparse gradient accumulator over field parameters.
class GradientBuffer {
 public:
  explicit GradientBuffer(const FeatureField& field);
  void add_density(size_t node, double g);
  void add_embedding(size_t flat_index, double g);
  void apply_and_reset(FeatureField& field, double lr);
  void reset();
  bool all_finite() const;

  const std::vector<double>& density() const { return g_density_; }
  const std::vector<double>& embedding() const { return g_embed_; }

 private:
  std::vector<double> g_density_, g_embed_;
  std::vector<size_t> touched_density_, touched_embed_;
};

// Forward + analytic backward for each loss term; gradients accumulate into buf.
double density_loss_grad(const FeatureField& field, const std::vector<Vec3>& points,
                         double lambda_d, GradientBuffer& buf);
// Language loss summed over the given rays at every scale; rays whose
// weight_sum falls below the degenerate threshold are skipped.
double lang_loss_grad(const FeatureField& field, const SupervisionData& sup,
                      const std::vector<uint32_t>& ray_ids, double lambda_lang,
                      GradientBuffer& buf);
double consistency_loss_grad(const FeatureField& field, const std::vector<Vec3>& positions,
                             const std::vector<PairSample>& pairs, double delta, double lambda_c,
                             GradientBuffer& buf);

// Deterministic per-iteration batch drawn from the supervision data.
struct TrainBatch {
  std::vector<uint32_t> ray_ids;
  std::vector<Vec3> density_points;
  std::vector<PairSample> pairs;
};

TrainBatch sample_batch(const SupervisionData& sup, const SuperpointPartition& partition,
                        const TrainConfig& config, uint32_t iteration);

int stage_of(const TrainConfig& config, uint32_t iteration);

// Staged gradient descent; mutates the field in place and returns the loss log.
TrainResult train(FeatureField& field, const SupervisionData& sup,
                  const std::vector<Vec3>& positions, const SuperpointPartition& partition,
                  const TrainConfig& config);

double softplus(double x);
double softplus_inv(double y);

}  // namespace spnerf
