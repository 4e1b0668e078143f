#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "spnerf/featurefield.hpp"
#include "spnerf/merging.hpp"
#include "spnerf/superpoints.hpp"
#include "spnerf/synth.hpp"

namespace spnerf {

enum class Ablation { kNone, kAffinity, kConsistency, kBoth };

// One config object for every stage; JSON round-trippable, unknown keys rejected.
struct PipelineConfig {
  CutParams cut;
  TrainConfig train;
  MergeConfig merge;
  double voxel_size = 0.1;
  uint32_t scales = 3;
  double grid_margin = 0.2;
  uint32_t embed_dim = 16;
  double sigma_emb = 0.1;
  double ray_fraction = 1.0;
  uint64_t seed = 1;
  Ablation ablate = Ablation::kNone;
  uint32_t threads = 1;

  void validate() const;
};

PipelineConfig config_from_json(const std::string& json_text);
std::string config_to_json(const PipelineConfig& config);

// Defaults sized for the bundled synthetic scenes.
PipelineConfig default_pipeline_config();

struct PipelineOutputs {
  std::filesystem::path cloud_ply;
  std::filesystem::path partition;
  std::filesystem::path field;
  std::filesystem::path labeled_ply;
  std::filesystem::path metrics_json;
  double miou = 0.0;
  double macc = 0.0;
};

// Full synthetic pipeline: scene -> superpoints -> staged training -> merging
// -> metrics against the generator's labels. Writes a run manifest JSON.
PipelineOutputs run_pipeline(const SceneSpec& scene, const PipelineConfig& config,
                             const std::filesystem::path& out_dir);

// Manifest describing a finished run: config + scene + produced files.
void write_run_manifest(const SceneSpec& scene, const PipelineConfig& config,
                        const PipelineOutputs& outputs, const std::filesystem::path& path);

uint64_t effective_seed(uint64_t config_seed);  // SPF_SEED env override

}  // namespace spnerf
