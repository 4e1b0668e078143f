#include "spnerf/evaluation.hpp"

#include "spnerf/errors.hpp"

namespace spnerf {

ConfusionMatrix confusion(const std::vector<uint32_t>& pred, const std::vector<uint32_t>& gt,
                          uint32_t class_count) {
  if (pred.size() != gt.size()) throw LengthMismatch("pred and gt lengths differ");
  ConfusionMatrix m;
  m.class_count = class_count;
  m.counts.assign(static_cast<size_t>(class_count) * class_count, 0);
  m.pred_ignore.assign(class_count, 0);
  for (size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] == kIgnoreLabel) {
      ++m.ignored;
      continue;
    }
    if (gt[i] >= class_count) throw LabelOutOfRange("gt label out of range");
    if (pred[i] == kIgnoreLabel) {
      ++m.pred_ignore[gt[i]];
      continue;
    }
    if (pred[i] >= class_count) throw LabelOutOfRange("pred label out of range");
    ++m.counts[static_cast<size_t>(gt[i]) * class_count + pred[i]];
  }
  return m;
}

std::vector<ClassMetrics> per_class_metrics(const ConfusionMatrix& m) {
  const uint32_t n = m.class_count;
  std::vector<uint64_t> row_sum(n, 0), col_sum(n, 0);
  for (uint32_t g = 0; g < n; ++g) {
    for (uint32_t p = 0; p < n; ++p) {
      row_sum[g] += m.at(g, p);
      col_sum[p] += m.at(g, p);
    }
    row_sum[g] += m.pred_ignore[g];  // ignored predictions count as FN
  }
  std::vector<ClassMetrics> out;
  for (uint32_t c = 0; c < n; ++c) {
    if (row_sum[c] == 0) continue;  // class absent from ground truth
    uint64_t tp = m.at(c, c);
    uint64_t fn = row_sum[c] - tp;
    uint64_t fp = col_sum[c] - tp;
    ClassMetrics cm;
    cm.class_id = c;
    cm.gt_count = row_sum[c];
    cm.iou = static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
    cm.recall = static_cast<double>(tp) / static_cast<double>(tp + fn);
    out.push_back(cm);
  }
  return out;
}

double miou(const ConfusionMatrix& m) {
  auto per_class = per_class_metrics(m);
  if (per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : per_class) sum += c.iou;
  return sum / static_cast<double>(per_class.size());
}

double macc(const ConfusionMatrix& m) {
  auto per_class = per_class_metrics(m);
  if (per_class.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& c : per_class) sum += c.recall;
  return sum / static_cast<double>(per_class.size());
}

}  // namespace spnerf
