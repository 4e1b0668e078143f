#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "spnerf/evaluation.hpp"
#include "spnerf/featurefield.hpp"
#include "spnerf/merging.hpp"
#include "spnerf/types.hpp"

namespace spnerf::io {

// PLY: ASCII or binary little-endian, float x/y/z (required), float
// nx/ny/nz and uint label (optional). Unknown properties are skipped.
PointCloud read_ply(const std::filesystem::path& path);
void write_ply(const PointCloud& cloud, const std::filesystem::path& path, bool binary = true);

// Labeled result export: label column plus a deterministic per-class color map.
void write_labeled_ply(const PointCloud& cloud, const std::vector<uint32_t>& labels,
                       const std::filesystem::path& path, bool binary = true);

// EMB1: magic, u32 rows, u32 dim, row-major little-endian f32 payload.
void write_embeddings(const std::vector<std::vector<double>>& rows,
                      const std::filesystem::path& path);
std::vector<std::vector<double>> read_embeddings(const std::filesystem::path& path);

// SPP1 partition column: magic, u32 count, u32 per point.
void write_partition(const SuperpointPartition& partition, const std::filesystem::path& path);
SuperpointPartition read_partition(const std::filesystem::path& path);

// SPF1 field checkpoint: header then f32 density grid then per-scale
// embedding grids, row-major (x fastest).
void write_field(const FeatureField& field, const std::filesystem::path& path);
FeatureField read_field(const std::filesystem::path& path);

// Label bank JSON: class names with (file, row) references into EMB1 files.
void write_labelbank(const LabelBank& bank, const std::filesystem::path& json_path);
LabelBank read_labelbank(const std::filesystem::path& json_path);

void write_loss_csv(const std::vector<LossLogRow>& log, const std::filesystem::path& path);
void write_scores_csv(const SegmentationResult& result, const std::vector<std::string>& class_names,
                      const std::filesystem::path& path);

std::string metrics_to_json(const ConfusionMatrix& matrix);
void write_metrics_json(const ConfusionMatrix& matrix, const std::filesystem::path& path);

}  // namespace spnerf::io
