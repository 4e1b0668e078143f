#include "spnerf/merging.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spnerf/errors.hpp"
#include "spnerf/geometry.hpp"

namespace spnerf {

namespace {

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t d = 0; d < a.size(); ++d) {
    dot += a[d] * b[d];
    na += a[d] * a[d];
    nb += b[d] * b[d];
  }
  na = std::sqrt(na);
  nb = std::sqrt(nb);
  if (na < 1e-12 || nb < 1e-12) throw ZeroVector("cosine similarity of zero vector");
  return dot / (na * nb);
}

double two_term_softmax(double s_pos, double s_neg) {
  double fp = std::exp(s_pos), fn = std::exp(s_neg);
  return fp / (fp + fn);
}

// Per-superpoint FPS sample with class-independent queried embeddings.
struct SampledSuperpoint {
  std::vector<uint32_t> point_ids;                    // global indices, FPS order
  std::vector<std::vector<double>> mean_embeddings;   // mean over scales, per sample
  std::vector<std::vector<std::vector<double>>> scale_embeddings;  // [sample][scale], max mode only
  bool degenerate = false;
};

SampledSuperpoint sample_superpoint(const FeatureField& field, const std::vector<Vec3>& positions,
                                    const std::vector<uint32_t>& members,
                                    const MergeConfig& config) {
  if (members.empty()) throw EmptySuperpoint();
  SampledSuperpoint out;

  std::vector<Vec3> member_pos;
  member_pos.reserve(members.size());
  for (uint32_t idx : members) member_pos.push_back(positions[idx]);
  uint32_t seed = static_cast<uint32_t>(
      std::min_element(members.begin(), members.end()) - members.begin());
  uint32_t m = std::min<uint32_t>(config.points_per_superpoint,
                                  static_cast<uint32_t>(members.size()));
  std::vector<uint32_t> local = farthest_point_sampling(member_pos, m, seed);

  const bool keep_scales = config.scale_reduction == ScaleReduction::kMaxRelevancy;
  std::vector<double> scale_emb(field.embed_dim);
  double max_norm = 0.0;
  for (uint32_t li : local) {
    uint32_t global = members[li];
    out.point_ids.push_back(global);
    std::vector<double> mean(field.embed_dim, 0.0);
    std::vector<std::vector<double>> per_scale;
    for (uint32_t s = 0; s < field.scale_count; ++s) {
      field.query_into(positions[global], s, scale_emb);
      for (uint32_t d = 0; d < field.embed_dim; ++d) mean[d] += scale_emb[d];
      if (keep_scales) per_scale.push_back(scale_emb);
    }
    for (double& v : mean) v /= field.scale_count;
    double norm2 = std::inner_product(mean.begin(), mean.end(), mean.begin(), 0.0);
    max_norm = std::max(max_norm, norm2);
    out.mean_embeddings.push_back(std::move(mean));
    if (keep_scales) out.scale_embeddings.push_back(std::move(per_scale));
  }
  out.degenerate = max_norm < 1e-24;
  return out;
}

SuperpointScore score_sampled(const SampledSuperpoint& sampled, std::span<const double> f_pos,
                              const std::vector<std::vector<double>>& negatives,
                              const MergeConfig& config) {
  if (sampled.degenerate) throw DegenerateField("all sampled embeddings are zero");
  const size_t n = sampled.point_ids.size();
  std::vector<double> scores(n);
  for (size_t i = 0; i < n; ++i) {
    if (config.scale_reduction == ScaleReduction::kMaxRelevancy) {
      double best = 0.0;
      bool any = false;
      for (const auto& emb : sampled.scale_embeddings[i]) {
        double norm2 = std::inner_product(emb.begin(), emb.end(), emb.begin(), 0.0);
        if (norm2 < 1e-24) continue;
        best = std::max(best, point_relevancy(emb, f_pos, negatives));
        any = true;
      }
      if (!any) {
        // Fall back to the mean embedding; sample_superpoint guarantees at
        // least one sample has nonzero mean when not degenerate.
        scores[i] = 0.0;
        continue;
      }
      scores[i] = best;
    } else {
      const auto& emb = sampled.mean_embeddings[i];
      double norm2 = std::inner_product(emb.begin(), emb.end(), emb.begin(), 0.0);
      scores[i] = norm2 < 1e-24 ? 0.0 : point_relevancy(emb, f_pos, negatives);
    }
  }
  // Lower median; score ties resolve by sample order so the representative
  // embedding is deterministic.
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });
  size_t median = order[(n - 1) / 2];
  return {scores[median], sampled.mean_embeddings[median]};
}

}  // namespace

double pair_score(std::span<const double> f_a, std::span<const double> f_b) {
  return std::exp(cosine_similarity(f_a, f_b));
}

double point_relevancy(std::span<const double> f_p, std::span<const double> f_pos,
                       const std::vector<std::vector<double>>& negatives) {
  if (negatives.empty()) throw ConfigError("need at least one negative embedding");
  double s_pos = cosine_similarity(f_p, f_pos);
  double best = 1.0;
  for (const auto& neg : negatives) {
    best = std::min(best, two_term_softmax(s_pos, cosine_similarity(f_p, neg)));
  }
  return best;
}

SuperpointScore superpoint_relevancy(const FeatureField& field, const std::vector<Vec3>& positions,
                                     const std::vector<uint32_t>& members,
                                     std::span<const double> f_pos,
                                     const std::vector<std::vector<double>>& negatives,
                                     const MergeConfig& config) {
  SampledSuperpoint sampled = sample_superpoint(field, positions, members, config);
  return score_sampled(sampled, f_pos, negatives, config);
}

double affinity_pair(std::span<const double> f_sp, std::span<const double> f_pos_j,
                     const std::vector<std::vector<double>>& neg_embeddings) {
  if (neg_embeddings.empty()) throw ConfigError("need at least one negative superpoint");
  double s_pos = cosine_similarity(f_sp, f_pos_j);
  double best = 1.0;
  for (const auto& neg : neg_embeddings) {
    best = std::min(best, two_term_softmax(s_pos, cosine_similarity(f_sp, neg)));
  }
  return best;
}

double affinity(uint32_t sp, const std::vector<double>& all_relevancy,
                const std::vector<std::vector<double>>& all_embeddings, const MergeConfig& config) {
  const uint32_t n = static_cast<uint32_t>(all_relevancy.size());
  const uint32_t na = config.affinity_count;
  if (n < 2 * na) throw TooFewSuperpoints("need at least 2 * N_a superpoints");

  std::vector<uint32_t> order(n);
  std::iota(order.begin(), order.end(), 0u);
  // Highest relevancy first; ties toward the lower superpoint id.
  std::sort(order.begin(), order.end(), [&](uint32_t a, uint32_t b) {
    if (all_relevancy[a] != all_relevancy[b]) return all_relevancy[a] > all_relevancy[b];
    return a < b;
  });

  std::vector<std::vector<double>> neg_embeddings;
  neg_embeddings.reserve(na);
  for (uint32_t t = 0; t < na; ++t) neg_embeddings.push_back(all_embeddings[order[n - 1 - t]]);

  double weighted = 0.0;
  double weight_total = 0.0;
  for (uint32_t t = 0; t < na; ++t) {
    uint32_t pos = order[t];
    double a = affinity_pair(all_embeddings[sp], all_embeddings[pos], neg_embeddings);
    weighted += all_relevancy[pos] * a;
    weight_total += all_relevancy[pos];
  }
  if (config.normalized_affinity && weight_total > 0.0) return weighted / weight_total;
  return weighted / static_cast<double>(na);
}

double scaled_relevancy(double r_sp, double a_sp, double a_min, double w) {
  if (!(w > 0.0)) throw ConfigError("affinity weight must be positive");
  return r_sp * w * (1.0 + (a_sp - a_min));
}

SegmentationResult assign_classes(const FeatureField& field, const SuperpointPartition& partition,
                                  const std::vector<Vec3>& positions, const LabelBank& bank,
                                  const MergeConfig& config) {
  if (bank.classes.empty()) throw ConfigError("label bank has no classes");
  if (bank.negatives.empty()) throw ConfigError("label bank has no negatives");
  const uint32_t n_sp = partition.superpoint_count;
  const uint32_t n_cls = static_cast<uint32_t>(bank.classes.size());

  SegmentationResult result;
  result.class_count = n_cls;
  result.superpoint_count = n_sp;
  result.relevancy.assign(static_cast<size_t>(n_sp) * n_cls, 0.0);
  result.affinity_score.assign(static_cast<size_t>(n_sp) * n_cls, 0.0);
  result.scaled_relevancy.assign(static_cast<size_t>(n_sp) * n_cls, 0.0);
  result.superpoint_class.assign(n_sp, kIgnoreLabel);
  result.representative.resize(n_sp);

  std::vector<SampledSuperpoint> sampled;
  sampled.reserve(n_sp);
  for (uint32_t sp = 0; sp < n_sp; ++sp) {
    sampled.push_back(sample_superpoint(field, positions, partition.members[sp], config));
  }

  // N_a is clamped so small scenes still score; the strict contract lives in
  // affinity() itself.
  MergeConfig eff = config;
  if (eff.use_affinity && n_sp >= 2) {
    eff.affinity_count = std::max<uint32_t>(1, std::min(eff.affinity_count, n_sp / 2));
  }

  std::vector<double> cls_relevancy(n_sp);
  std::vector<std::vector<double>> cls_embedding(n_sp);
  std::vector<std::vector<std::vector<double>>> per_class_embeddings(n_cls);
  std::vector<double> best_score(n_sp, -std::numeric_limits<double>::infinity());

  for (uint32_t cls = 0; cls < n_cls; ++cls) {
    for (uint32_t sp = 0; sp < n_sp; ++sp) {
      if (sampled[sp].degenerate) {
        cls_relevancy[sp] = 0.0;
        cls_embedding[sp].assign(field.embed_dim, 0.0);
        continue;
      }
      SuperpointScore score =
          score_sampled(sampled[sp], bank.classes[cls].f_pos, bank.negatives, eff);
      cls_relevancy[sp] = score.relevancy;
      cls_embedding[sp] = std::move(score.embedding);
      result.relevancy[static_cast<size_t>(sp) * n_cls + cls] = cls_relevancy[sp];
    }

    bool affinity_active = eff.use_affinity && n_sp >= 2 * eff.affinity_count;
    double a_min = 0.0;
    std::vector<double> a(n_sp, 0.0);
    if (affinity_active) {
      a_min = std::numeric_limits<double>::infinity();
      for (uint32_t sp = 0; sp < n_sp; ++sp) {
        if (sampled[sp].degenerate) continue;
        a[sp] = affinity(sp, cls_relevancy, cls_embedding, eff);
        a_min = std::min(a_min, a[sp]);
      }
      if (!std::isfinite(a_min)) a_min = 0.0;
    }

    for (uint32_t sp = 0; sp < n_sp; ++sp) {
      if (sampled[sp].degenerate) continue;
      result.affinity_score[static_cast<size_t>(sp) * n_cls + cls] = a[sp];
      double r_star = scaled_relevancy(cls_relevancy[sp], a[sp], a_min, eff.affinity_weight);
      result.scaled_relevancy[static_cast<size_t>(sp) * n_cls + cls] = r_star;
      // Ties resolve by class declaration order (strict > keeps the earlier class).
      if (r_star > best_score[sp]) {
        best_score[sp] = r_star;
        result.superpoint_class[sp] = cls;
        result.representative[sp] = cls_embedding[sp];
      }
    }
  }

  result.point_labels.assign(partition.assignment.size(), kIgnoreLabel);
  for (size_t p = 0; p < partition.assignment.size(); ++p) {
    result.point_labels[p] = result.superpoint_class[partition.assignment[p]];
  }
  return result;
}

}  // namespace spnerf
