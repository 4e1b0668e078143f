#pragma once

#include <cstdint>
#include <vector>

#include "spnerf/types.hpp"

namespace spnerf {

struct ConfusionMatrix {
  uint32_t class_count = 0;
  std::vector<uint64_t> counts;       // row = gt class, column = predicted class
  std::vector<uint64_t> pred_ignore;  // per gt class: predictions of kIgnoreLabel (counted as FN)
  uint64_t ignored = 0;               // points with gt == kIgnoreLabel

  uint64_t at(uint32_t gt, uint32_t pred) const {
    return counts[static_cast<size_t>(gt) * class_count + pred];
  }
};

ConfusionMatrix confusion(const std::vector<uint32_t>& pred, const std::vector<uint32_t>& gt,
                          uint32_t class_count);

// Mean over gt-present classes of TP / (TP + FP + FN).
double miou(const ConfusionMatrix& m);

// Mean over gt-present classes of TP / (TP + FN).
double macc(const ConfusionMatrix& m);

struct ClassMetrics {
  uint32_t class_id = 0;
  double iou = 0.0;
  double recall = 0.0;
  uint64_t gt_count = 0;
};

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& m);

}  // namespace spnerf
