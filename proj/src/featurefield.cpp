#include "spnerf/featurefield.hpp"

#include <algorithm>
#include <cmath>

#include "spnerf/errors.hpp"
#include "spnerf/rng.hpp"

namespace spnerf {

double softplus(double x) {
  if (x > 30.0) return x;
  return std::log1p(std::exp(x));
}

double softplus_inv(double y) {
  if (y > 30.0) return y;
  return std::log(std::expm1(y));
}

namespace {
double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

FeatureField FeatureField::create(const Vec3& origin, double voxel_size,
                                  std::array<uint32_t, 3> dims, uint32_t scales, uint32_t dim) {
  if (voxel_size <= 0.0 || scales < 1 || dim < 1 || dims[0] < 2 || dims[1] < 2 || dims[2] < 2) {
    throw ConfigError("invalid FeatureField geometry");
  }
  FeatureField f;
  f.origin = origin;
  f.voxel_size = voxel_size;
  f.dims = dims;
  f.scale_count = scales;
  f.embed_dim = dim;
  f.raw_density.assign(f.node_count(), 0.0);
  f.embeddings.assign(static_cast<size_t>(scales) * f.node_count() * dim, 0.0);
  return f;
}

bool FeatureField::in_bounds(const Vec3& x) const {
  const double eps = 1e-9 * voxel_size;
  for (int a = 0; a < 3; ++a) {
    double lo = origin[a] - eps;
    double hi = origin[a] + (dims[a] - 1) * voxel_size + eps;
    if (!(x[a] >= lo && x[a] <= hi)) return false;
  }
  return true;
}

TrilinearStencil FeatureField::stencil(const Vec3& x) const {
  if (!in_bounds(x)) throw OutOfBounds("query position outside the voxel grid");
  uint32_t base[3];
  double frac[3];
  for (int a = 0; a < 3; ++a) {
    double u = (x[a] - origin[a]) / voxel_size;
    u = std::clamp(u, 0.0, static_cast<double>(dims[a] - 1));
    uint32_t i = static_cast<uint32_t>(std::min<double>(std::floor(u), dims[a] - 2));
    base[a] = i;
    frac[a] = u - static_cast<double>(i);
  }
  TrilinearStencil s;
  int c = 0;
  for (uint32_t dz = 0; dz < 2; ++dz) {
    for (uint32_t dy = 0; dy < 2; ++dy) {
      for (uint32_t dx = 0; dx < 2; ++dx) {
        s.node[c] = node_index(base[0] + dx, base[1] + dy, base[2] + dz);
        s.weight[c] = (dx ? frac[0] : 1.0 - frac[0]) * (dy ? frac[1] : 1.0 - frac[1]) *
                      (dz ? frac[2] : 1.0 - frac[2]);
        ++c;
      }
    }
  }
  return s;
}

void FeatureField::query_into(const Vec3& x, uint32_t scale, std::span<double> out) const {
  if (scale >= scale_count) throw OutOfBounds("scale index out of range");
  TrilinearStencil s = stencil(x);
  std::fill(out.begin(), out.end(), 0.0);
  for (int c = 0; c < 8; ++c) {
    const double* e = embeddings.data() + embedding_offset(scale, s.node[c]);
    for (uint32_t d = 0; d < embed_dim; ++d) out[d] += s.weight[c] * e[d];
  }
}

std::vector<double> FeatureField::query(const Vec3& x, uint32_t scale) const {
  std::vector<double> out(embed_dim);
  query_into(x, scale, out);
  return out;
}

double FeatureField::density(const Vec3& x) const {
  TrilinearStencil s = stencil(x);
  double sigma = 0.0;
  for (int c = 0; c < 8; ++c) sigma += s.weight[c] * softplus(raw_density[s.node[c]]);
  return sigma;
}

RenderResult render_ray(const FeatureField& field, const Ray& ray, uint32_t scale) {
  if (std::abs(ray.direction.norm() - 1.0) > 1e-6) throw ConfigError("ray direction must be unit");
  if (!(ray.t_near >= 0.0) || !(ray.t_far > ray.t_near) || ray.sample_count < 1) {
    throw ConfigError("invalid ray interval");
  }
  const double dt = (ray.t_far - ray.t_near) / ray.sample_count;
  std::vector<double> raw(field.embed_dim, 0.0);
  std::vector<double> sample(field.embed_dim);
  double transmittance = 1.0;
  double weight_sum = 0.0;
  for (uint32_t i = 0; i < ray.sample_count; ++i) {
    double t = ray.t_near + (i + 0.5) * dt;
    Vec3 pos = ray.origin + t * ray.direction;
    if (!field.in_bounds(pos)) continue;  // sigma = 0 outside the grid
    double sigma = field.density(pos);
    double alpha = 1.0 - std::exp(-sigma * dt);
    double w = transmittance * alpha;
    if (w > 0.0) {
      field.query_into(pos, scale, sample);
      for (uint32_t d = 0; d < field.embed_dim; ++d) raw[d] += w * sample[d];
      weight_sum += w;
    }
    transmittance *= 1.0 - alpha;
  }
  if (weight_sum < 1e-6) throw DegenerateRay("weight sum below 1e-6");
  double norm = 0.0;
  for (double v : raw) norm += v * v;
  norm = std::sqrt(norm);
  if (norm < 1e-12) throw DegenerateRay("rendered embedding has zero norm");
  for (double& v : raw) v /= norm;
  return {std::move(raw), weight_sum};
}

double loss_lang(std::span<const double> rendered, std::span<const double> target,
                 double lambda_lang) {
  double dot = 0.0;
  for (size_t d = 0; d < rendered.size(); ++d) dot += rendered[d] * target[d];
  return -lambda_lang * dot;
}

double loss_consistency_pair(std::span<const double> f_i, std::span<const double> f_j,
                             double delta) {
  if (delta <= 0.0) throw ConfigError("huber delta must be positive");
  double r2 = 0.0;
  for (size_t d = 0; d < f_i.size(); ++d) {
    double diff = f_i[d] - f_j[d];
    r2 += diff * diff;
  }
  double r = std::sqrt(r2);
  if (r <= delta) return 0.5 * r2;
  return delta * r - 0.5 * delta * delta;
}

double loss_consistency_batch(const FeatureField& field, const std::vector<Vec3>& positions,
                              const std::vector<PairSample>& pairs, double delta) {
  if (pairs.empty()) throw EmptyBatch("no pair samples");
  std::vector<double> fi(field.embed_dim), fj(field.embed_dim);
  double total = 0.0;
  for (const PairSample& p : pairs) {
    double per_pair = 0.0;
    for (uint32_t s = 0; s < field.scale_count; ++s) {
      field.query_into(positions[p.i], s, fi);
      field.query_into(positions[p.j], s, fj);
      per_pair += loss_consistency_pair(fi, fj, delta);
    }
    total += per_pair / field.scale_count;
  }
  return total / static_cast<double>(pairs.size());
}

double loss_density(const FeatureField& field, const std::vector<Vec3>& surface_points) {
  if (surface_points.empty()) throw EmptyBatch("no surface points");
  double total = 0.0;
  for (const Vec3& p : surface_points) {
    double gap = 1.0 - field.density(p);
    total += gap * gap;
  }
  return total / static_cast<double>(surface_points.size());
}

GradientBuffer::GradientBuffer(const FeatureField& field)
    : g_density_(field.raw_density.size(), 0.0), g_embed_(field.embeddings.size(), 0.0) {}

void GradientBuffer::add_density(size_t node, double g) {
  if (g_density_[node] == 0.0) touched_density_.push_back(node);
  g_density_[node] += g;
}

void GradientBuffer::add_embedding(size_t flat_index, double g) {
  if (g_embed_[flat_index] == 0.0) touched_embed_.push_back(flat_index);
  g_embed_[flat_index] += g;
}

void GradientBuffer::apply_and_reset(FeatureField& field, double lr) {
  for (size_t idx : touched_density_) {
    field.raw_density[idx] -= lr * g_density_[idx];
    g_density_[idx] = 0.0;
  }
  for (size_t idx : touched_embed_) {
    field.embeddings[idx] -= lr * g_embed_[idx];
    g_embed_[idx] = 0.0;
  }
  touched_density_.clear();
  touched_embed_.clear();
}

void GradientBuffer::reset() {
  for (size_t idx : touched_density_) g_density_[idx] = 0.0;
  for (size_t idx : touched_embed_) g_embed_[idx] = 0.0;
  touched_density_.clear();
  touched_embed_.clear();
}

bool GradientBuffer::all_finite() const {
  for (size_t idx : touched_density_)
    if (!std::isfinite(g_density_[idx])) return false;
  for (size_t idx : touched_embed_)
    if (!std::isfinite(g_embed_[idx])) return false;
  return true;
}

double density_loss_grad(const FeatureField& field, const std::vector<Vec3>& points,
                         double lambda_d, GradientBuffer& buf) {
  if (points.empty()) throw EmptyBatch("no surface points");
  const double inv_n = 1.0 / static_cast<double>(points.size());
  double total = 0.0;
  for (const Vec3& p : points) {
    TrilinearStencil s = field.stencil(p);
    double sigma = 0.0;
    for (int c = 0; c < 8; ++c) sigma += s.weight[c] * softplus(field.raw_density[s.node[c]]);
    double gap = 1.0 - sigma;
    total += gap * gap;
    // d/draw = -2 * gap * w_c * sigmoid(raw_c) / N
    double coeff = -2.0 * gap * inv_n * lambda_d;
    for (int c = 0; c < 8; ++c) {
      buf.add_density(s.node[c], coeff * s.weight[c] * sigmoid(field.raw_density[s.node[c]]));
    }
  }
  return total * inv_n;
}

double lang_loss_grad(const FeatureField& field, const SupervisionData& sup,
                      const std::vector<uint32_t>& ray_ids, double lambda_lang,
                      GradientBuffer& buf) {
  const uint32_t dim = field.embed_dim;
  const uint32_t n_samples_max = 4096;
  double total = 0.0;

  struct SampleRec {
    Vec3 pos;
    double alpha, transmittance;
    TrilinearStencil sten;
    bool inside;
  };
  std::vector<SampleRec> recs;
  std::vector<std::vector<double>> sample_emb;
  std::vector<double> raw(dim), grad_raw(dim);

  for (uint32_t rid : ray_ids) {
    const Ray& ray = sup.rays[rid];
    const std::vector<double>& target = sup.ray_targets[rid];
    const double dt = (ray.t_far - ray.t_near) / ray.sample_count;
    if (ray.sample_count > n_samples_max) throw ConfigError("sample count too large");

    for (uint32_t scale = 0; scale < field.scale_count; ++scale) {
      // Forward pass, recording per-sample state.
      recs.clear();
      sample_emb.clear();
      std::fill(raw.begin(), raw.end(), 0.0);
      double transmittance = 1.0;
      double weight_sum = 0.0;
      for (uint32_t i = 0; i < ray.sample_count; ++i) {
        double t = ray.t_near + (i + 0.5) * dt;
        Vec3 pos = ray.origin + t * ray.direction;
        SampleRec rec;
        rec.pos = pos;
        rec.inside = field.in_bounds(pos);
        if (rec.inside) {
          rec.sten = field.stencil(pos);
          double sigma = 0.0;
          for (int c = 0; c < 8; ++c)
            sigma += rec.sten.weight[c] * softplus(field.raw_density[rec.sten.node[c]]);
          rec.alpha = 1.0 - std::exp(-sigma * dt);
        } else {
          rec.alpha = 0.0;
        }
        rec.transmittance = transmittance;
        double w = transmittance * rec.alpha;
        if (rec.inside) {
          std::vector<double> emb(dim);
          field.query_into(pos, scale, emb);
          for (uint32_t d = 0; d < dim; ++d) raw[d] += w * emb[d];
          sample_emb.push_back(std::move(emb));
        } else {
          sample_emb.emplace_back();
        }
        weight_sum += w;
        transmittance *= 1.0 - rec.alpha;
        recs.push_back(rec);
      }
      if (weight_sum < 1e-6) continue;  // skip degenerate rays during training
      double norm = 0.0;
      for (double v : raw) norm += v * v;
      norm = std::sqrt(norm);
      if (norm < 1e-12) continue;

      double dot = 0.0;
      for (uint32_t d = 0; d < dim; ++d) dot += raw[d] * target[d] / norm;
      total += -lambda_lang * dot;

      // dL/draw = -lambda * (target - phi * (phi . target)) / norm
      for (uint32_t d = 0; d < dim; ++d) {
        double phi = raw[d] / norm;
        grad_raw[d] = -lambda_lang * (target[d] - phi * dot) / norm;
      }

      // Backward through the quadrature. suffix[i] = sum_{m >= i} w_m * (g . emb_m).
      const size_t ns = recs.size();
      std::vector<double> g_dot(ns, 0.0);
      for (size_t i = 0; i < ns; ++i) {
        if (!recs[i].inside) continue;
        double gd = 0.0;
        for (uint32_t d = 0; d < dim; ++d) gd += grad_raw[d] * sample_emb[i][d];
        g_dot[i] = gd;
        // Embedding gradient: dL/demb_i = w_i * grad_raw, spread over the stencil.
        double w = recs[i].transmittance * recs[i].alpha;
        if (w != 0.0) {
          for (int c = 0; c < 8; ++c) {
            size_t base = field.embedding_offset(scale, recs[i].sten.node[c]);
            double cw = w * recs[i].sten.weight[c];
            for (uint32_t d = 0; d < dim; ++d) buf.add_embedding(base + d, cw * grad_raw[d]);
          }
        }
      }
      double suffix = 0.0;
      for (size_t ii = ns; ii-- > 0;) {
        const SampleRec& rec = recs[ii];
        if (!rec.inside) continue;
        double w = rec.transmittance * rec.alpha;
        // dL/dalpha_i = T_i * g_dot_i - (suffix over later samples) / (1 - alpha_i)
        double dL_dalpha = rec.transmittance * g_dot[ii];
        if (rec.alpha < 1.0) dL_dalpha -= suffix / (1.0 - rec.alpha);
        suffix += w * g_dot[ii];
        double dalpha_dsigma = dt * (1.0 - rec.alpha);
        double coeff = dL_dalpha * dalpha_dsigma;
        for (int c = 0; c < 8; ++c) {
          buf.add_density(rec.sten.node[c], coeff * rec.sten.weight[c] *
                                                sigmoid(field.raw_density[rec.sten.node[c]]));
        }
      }
    }
  }
  return total;
}

double consistency_loss_grad(const FeatureField& field, const std::vector<Vec3>& positions,
                             const std::vector<PairSample>& pairs, double delta, double lambda_c,
                             GradientBuffer& buf) {
  if (pairs.empty()) throw EmptyBatch("no pair samples");
  const uint32_t dim = field.embed_dim;
  const double inv_ns =
      1.0 / (static_cast<double>(pairs.size()) * static_cast<double>(field.scale_count));
  std::vector<double> fi(dim), fj(dim);
  double total = 0.0;
  for (const PairSample& p : pairs) {
    TrilinearStencil si = field.stencil(positions[p.i]);
    TrilinearStencil sj = field.stencil(positions[p.j]);
    for (uint32_t s = 0; s < field.scale_count; ++s) {
      field.query_into(positions[p.i], s, fi);
      field.query_into(positions[p.j], s, fj);
      double r2 = 0.0;
      for (uint32_t d = 0; d < dim; ++d) {
        double diff = fi[d] - fj[d];
        r2 += diff * diff;
      }
      double r = std::sqrt(r2);
      double loss, dscale;  // dL/ddiff = dscale * diff
      if (r <= delta) {
        loss = 0.5 * r2;
        dscale = 1.0;
      } else {
        loss = delta * r - 0.5 * delta * delta;
        dscale = delta / r;
      }
      total += loss;
      double coeff = lambda_c * inv_ns * dscale;
      for (uint32_t d = 0; d < dim; ++d) {
        double g = coeff * (fi[d] - fj[d]);
        for (int c = 0; c < 8; ++c) {
          buf.add_embedding(field.embedding_offset(s, si.node[c]) + d, g * si.weight[c]);
          buf.add_embedding(field.embedding_offset(s, sj.node[c]) + d, -g * sj.weight[c]);
        }
      }
    }
  }
  return total * inv_ns;
}

int stage_of(const TrainConfig& config, uint32_t iteration) {
  if (iteration < config.stage1_end) return 1;
  if (iteration < config.stage2_end) return 2;
  return 3;
}

TrainBatch sample_batch(const SupervisionData& sup, const SuperpointPartition& partition,
                        const TrainConfig& config, uint32_t iteration) {
  TrainBatch batch;
  Rng rng = Rng::substream(config.seed, 0x5ba7c5ULL + iteration);

  const size_t n_points = sup.surface_points.size();
  const uint32_t pb = static_cast<uint32_t>(std::min<size_t>(config.point_batch, n_points));
  batch.density_points.reserve(pb);
  for (uint32_t t = 0; t < pb; ++t) {
    batch.density_points.push_back(sup.surface_points[rng.next_below(n_points)]);
  }

  const size_t n_rays = sup.rays.size();
  if (n_rays > 0) {
    const uint32_t rb = static_cast<uint32_t>(std::min<size_t>(config.ray_batch, n_rays));
    batch.ray_ids.reserve(rb);
    for (uint32_t t = 0; t < rb; ++t) {
      batch.ray_ids.push_back(static_cast<uint32_t>(rng.next_below(n_rays)));
    }
  }

  if (partition.superpoint_count > 0) {
    // Superpoints drawn proportional to size, then two member points uniformly.
    std::vector<size_t> cumulative(partition.superpoint_count);
    size_t running = 0;
    for (uint32_t s = 0; s < partition.superpoint_count; ++s) {
      running += partition.members[s].size();
      cumulative[s] = running;
    }
    batch.pairs.reserve(config.pair_batch);
    for (uint32_t t = 0; t < config.pair_batch; ++t) {
      size_t pick = rng.next_below(running);
      uint32_t sp = static_cast<uint32_t>(
          std::upper_bound(cumulative.begin(), cumulative.end(), pick) - cumulative.begin());
      const auto& mem = partition.members[sp];
      if (mem.size() < 2) {
        --t;  // resample; cannot loop forever when any superpoint has >= 2 members
        if (running <= partition.superpoint_count) break;
        continue;
      }
      uint32_t a = mem[rng.next_below(mem.size())];
      uint32_t b = mem[rng.next_below(mem.size())];
      if (a == b) {
        --t;
        continue;
      }
      batch.pairs.push_back({a, b});
    }
  }
  return batch;
}

TrainResult train(FeatureField& field, const SupervisionData& sup,
                  const std::vector<Vec3>& positions, const SuperpointPartition& partition,
                  const TrainConfig& config) {
  if (!(config.stage1_end <= config.stage2_end && config.stage2_end <= config.total_iters)) {
    throw ConfigError("stage boundaries must satisfy s1 <= s2 <= total");
  }
  TrainResult result;
  result.log.reserve(config.total_iters);
  GradientBuffer buf(field);
  for (uint32_t iter = 0; iter < config.total_iters; ++iter) {
    const int stage = stage_of(config, iter);
    TrainBatch batch = sample_batch(sup, partition, config, iter);

    LossLogRow row;
    row.iteration = iter;
    row.stage = stage;
    row.density = density_loss_grad(field, batch.density_points, config.lambda_d, buf);
    if (stage >= 2 && !batch.ray_ids.empty()) {
      row.lang = lang_loss_grad(field, sup, batch.ray_ids, config.lambda_lang, buf);
    }
    if (stage >= 3 && !batch.pairs.empty()) {
      row.consistency = consistency_loss_grad(field, positions, batch.pairs, config.huber_delta,
                                              config.lambda_c, buf);
    }
    if (!std::isfinite(row.density) || !std::isfinite(row.lang) ||
        !std::isfinite(row.consistency) || !buf.all_finite()) {
      throw NonFiniteLoss("non-finite loss at iteration " + std::to_string(iter));
    }
    buf.apply_and_reset(field, config.learning_rate);
    result.log.push_back(row);
  }
  return result;
}

}  // namespace spnerf
