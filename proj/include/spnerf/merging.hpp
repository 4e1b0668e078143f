#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spnerf/featurefield.hpp"
#include "spnerf/types.hpp"

namespace spnerf {

struct LabelBank {
  struct ClassEntry {
    std::string name;
    std::vector<double> f_pos;  // unit norm
  };
  std::vector<ClassEntry> classes;
  std::vector<std::vector<double>> negatives;  // unit norm, K >= 1
};

enum class ScaleReduction {
  kMeanEmbedding,   // average the per-scale embeddings, then score
  kMaxRelevancy,    // score per scale, keep the maximum
};

struct MergeConfig {
  uint32_t points_per_superpoint = 16;  // N_p
  uint32_t affinity_count = 5;          // N_a
  double affinity_weight = 1.0;         // w
  bool use_affinity = true;
  bool normalized_affinity = false;     // divide by the sum of weights instead of N_a
  ScaleReduction scale_reduction = ScaleReduction::kMeanEmbedding;
};

struct SegmentationResult {
  uint32_t class_count = 0;
  uint32_t superpoint_count = 0;
  // Row-major [superpoint][class].
  std::vector<double> relevancy;         // R
  std::vector<double> affinity_score;    // A
  std::vector<double> scaled_relevancy;  // R*
  std::vector<uint32_t> superpoint_class;  // winning class id, or kIgnoreLabel
  std::vector<uint32_t> point_labels;      // broadcast from superpoints
  std::vector<std::vector<double>> representative;  // f_sp of the winning class

  double at(const std::vector<double>& table, uint32_t sp, uint32_t cls) const {
    return table[static_cast<size_t>(sp) * class_count + cls];
  }
};

// exp(cosine similarity) -- the pairwise score F.
double pair_score(std::span<const double> f_a, std::span<const double> f_b);

// min over negatives of F(f,pos) / (F(f,pos) + F(f,neg_k)); algebraically
// logistic(sim_pos - max_k sim_neg_k).
double point_relevancy(std::span<const double> f_p, std::span<const double> f_pos,
                       const std::vector<std::vector<double>>& negatives);

struct SuperpointScore {
  double relevancy = 0.0;       // lower median over sampled points
  std::vector<double> embedding;  // queried embedding of the median point
};

// FPS-selected member points (seed = lowest global index member) are scored
// with point_relevancy; the lower median is returned along with the median
// point's embedding.
SuperpointScore superpoint_relevancy(const FeatureField& field, const std::vector<Vec3>& positions,
                                     const std::vector<uint32_t>& members,
                                     std::span<const double> f_pos,
                                     const std::vector<std::vector<double>>& negatives,
                                     const MergeConfig& config);

// Relevancy-style score between a superpoint embedding and one positive
// superpoint embedding against the negative superpoint embeddings.
double affinity_pair(std::span<const double> f_sp, std::span<const double> f_pos_j,
                     const std::vector<std::vector<double>>& neg_embeddings);

// Relevancy-weighted mean of affinity_pair over the N_a highest-relevancy
// superpoints, with the N_a lowest as negatives. Divides by N_a.
double affinity(uint32_t sp, const std::vector<double>& all_relevancy,
                const std::vector<std::vector<double>>& all_embeddings, const MergeConfig& config);

// R* = R * w * (1 + (A - A_min)).
double scaled_relevancy(double r_sp, double a_sp, double a_min, double w);

SegmentationResult assign_classes(const FeatureField& field, const SuperpointPartition& partition,
                                  const std::vector<Vec3>& positions, const LabelBank& bank,
                                  const MergeConfig& config);

}  // namespace spnerf
