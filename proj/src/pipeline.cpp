#include "spnerf/pipeline.hpp"

#include <cstdlib>
#include <fstream>

#include <nlohmann/json.hpp>

#include "spnerf/errors.hpp"
#include "spnerf/evaluation.hpp"
#include "spnerf/io.hpp"

namespace spnerf {

namespace {

using nlohmann::json;

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::kNone: return "none";
    case Ablation::kAffinity: return "affinity";
    case Ablation::kConsistency: return "consistency";
    case Ablation::kBoth: return "both";
  }
  return "none";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::kNone;
  if (name == "affinity") return Ablation::kAffinity;
  if (name == "consistency") return Ablation::kConsistency;
  if (name == "both") return Ablation::kBoth;
  throw ConfigError("unknown ablation: " + name);
}

void reject_unknown(const json& j, std::initializer_list<const char*> allowed,
                    const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* key : allowed) {
      if (it.key() == key) {
        ok = true;
        break;
      }
    }
    if (!ok) throw ConfigError("unknown config key " + where + "." + it.key());
  }
}

}  // namespace

void PipelineConfig::validate() const {
  std::vector<std::string> violations;
  if (cut.k_thresh <= 0.0) violations.push_back("cut.k_thresh must be > 0");
  if (cut.min_size < 1) violations.push_back("cut.min_size must be >= 1");
  if (cut.knn_k < 1) violations.push_back("cut.knn_k must be >= 1");
  if (train.huber_delta <= 0.0) violations.push_back("train.huber_delta must be > 0");
  if (train.learning_rate <= 0.0) violations.push_back("train.learning_rate must be > 0");
  if (train.lambda_lang < 0.0) violations.push_back("train.lambda_lang must be >= 0");
  if (train.lambda_c < 0.0) violations.push_back("train.lambda_c must be >= 0");
  if (train.lambda_d < 0.0) violations.push_back("train.lambda_d must be >= 0");
  if (!(train.stage1_end <= train.stage2_end && train.stage2_end <= train.total_iters)) {
    violations.push_back("train stages must satisfy s1 <= s2 <= total");
  }
  if (merge.points_per_superpoint < 1) violations.push_back("merge.np must be >= 1");
  if (merge.affinity_count < 1) violations.push_back("merge.na must be >= 1");
  if (!(merge.affinity_weight > 0.0)) violations.push_back("merge.w must be > 0");
  if (voxel_size <= 0.0) violations.push_back("voxel_size must be > 0");
  if (scales < 1) violations.push_back("scales must be >= 1");
  if (embed_dim < 1) violations.push_back("embed_dim must be >= 1");
  if (sigma_emb < 0.0) violations.push_back("sigma_emb must be >= 0");
  if (!(ray_fraction > 0.0 && ray_fraction <= 1.0)) {
    violations.push_back("ray_fraction must lie in (0, 1]");
  }
  if (threads < 1) violations.push_back("threads must be >= 1");
  if (!violations.empty()) {
    std::string msg = "config validation failed:";
    for (const auto& v : violations) msg += "\n  " + v;
    throw ConfigError(msg);
  }
}

PipelineConfig default_pipeline_config() {
  PipelineConfig c;
  c.cut = {0.05, 20, 10};
  c.train.lambda_lang = 1.0;
  c.train.lambda_c = 0.1;
  c.train.lambda_d = 0.1;
  c.train.huber_delta = 0.25;
  c.train.learning_rate = 0.05;
  c.train.total_iters = 1500;
  c.train.stage1_end = 150;    // 10%
  c.train.stage2_end = 450;    // 30%
  c.train.ray_batch = 256;
  c.train.point_batch = 1024;
  c.train.pair_batch = 256;
  c.merge.points_per_superpoint = 16;
  c.merge.affinity_count = 5;
  c.merge.affinity_weight = 1.0;
  return c;
}

PipelineConfig config_from_json(const std::string& json_text) {
  json j = json::parse(json_text, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config JSON parse error");
  reject_unknown(j,
                 {"cut", "train", "merge", "voxel_size", "scales", "grid_margin", "embed_dim",
                  "sigma_emb", "ray_fraction", "seed", "ablate", "threads"},
                 "config");

  PipelineConfig c = default_pipeline_config();
  if (j.contains("cut")) {
    const json& jc = j["cut"];
    reject_unknown(jc, {"k_thresh", "min_size", "knn_k"}, "cut");
    c.cut.k_thresh = jc.value("k_thresh", c.cut.k_thresh);
    c.cut.min_size = jc.value("min_size", c.cut.min_size);
    c.cut.knn_k = jc.value("knn_k", c.cut.knn_k);
  }
  if (j.contains("train")) {
    const json& jt = j["train"];
    reject_unknown(jt,
                   {"lambda_lang", "lambda_c", "lambda_d", "huber_delta", "learning_rate",
                    "stage1_end", "stage2_end", "total_iters", "ray_batch", "point_batch",
                    "pair_batch"},
                   "train");
    c.train.lambda_lang = jt.value("lambda_lang", c.train.lambda_lang);
    c.train.lambda_c = jt.value("lambda_c", c.train.lambda_c);
    c.train.lambda_d = jt.value("lambda_d", c.train.lambda_d);
    c.train.huber_delta = jt.value("huber_delta", c.train.huber_delta);
    c.train.learning_rate = jt.value("learning_rate", c.train.learning_rate);
    c.train.stage1_end = jt.value("stage1_end", c.train.stage1_end);
    c.train.stage2_end = jt.value("stage2_end", c.train.stage2_end);
    c.train.total_iters = jt.value("total_iters", c.train.total_iters);
    c.train.ray_batch = jt.value("ray_batch", c.train.ray_batch);
    c.train.point_batch = jt.value("point_batch", c.train.point_batch);
    c.train.pair_batch = jt.value("pair_batch", c.train.pair_batch);
  }
  if (j.contains("merge")) {
    const json& jm = j["merge"];
    reject_unknown(jm, {"np", "na", "w", "use_affinity", "normalized_affinity", "max_relevancy"},
                   "merge");
    c.merge.points_per_superpoint = jm.value("np", c.merge.points_per_superpoint);
    c.merge.affinity_count = jm.value("na", c.merge.affinity_count);
    c.merge.affinity_weight = jm.value("w", c.merge.affinity_weight);
    c.merge.use_affinity = jm.value("use_affinity", c.merge.use_affinity);
    c.merge.normalized_affinity = jm.value("normalized_affinity", c.merge.normalized_affinity);
    if (jm.value("max_relevancy", false)) c.merge.scale_reduction = ScaleReduction::kMaxRelevancy;
  }
  c.voxel_size = j.value("voxel_size", c.voxel_size);
  c.scales = j.value("scales", c.scales);
  c.grid_margin = j.value("grid_margin", c.grid_margin);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.sigma_emb = j.value("sigma_emb", c.sigma_emb);
  c.ray_fraction = j.value("ray_fraction", c.ray_fraction);
  c.seed = j.value("seed", c.seed);
  if (j.contains("ablate")) c.ablate = ablation_from_name(j["ablate"].get<std::string>());
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

std::string config_to_json(const PipelineConfig& c) {
  json j;
  j["cut"] = {{"k_thresh", c.cut.k_thresh}, {"min_size", c.cut.min_size}, {"knn_k", c.cut.knn_k}};
  j["train"] = {{"lambda_lang", c.train.lambda_lang}, {"lambda_c", c.train.lambda_c},
                {"lambda_d", c.train.lambda_d},       {"huber_delta", c.train.huber_delta},
                {"learning_rate", c.train.learning_rate}, {"stage1_end", c.train.stage1_end},
                {"stage2_end", c.train.stage2_end},   {"total_iters", c.train.total_iters},
                {"ray_batch", c.train.ray_batch},     {"point_batch", c.train.point_batch},
                {"pair_batch", c.train.pair_batch}};
  j["merge"] = {{"np", c.merge.points_per_superpoint},
                {"na", c.merge.affinity_count},
                {"w", c.merge.affinity_weight},
                {"use_affinity", c.merge.use_affinity},
                {"normalized_affinity", c.merge.normalized_affinity},
                {"max_relevancy", c.merge.scale_reduction == ScaleReduction::kMaxRelevancy}};
  j["voxel_size"] = c.voxel_size;
  j["scales"] = c.scales;
  j["grid_margin"] = c.grid_margin;
  j["embed_dim"] = c.embed_dim;
  j["sigma_emb"] = c.sigma_emb;
  j["ray_fraction"] = c.ray_fraction;
  j["seed"] = c.seed;
  j["ablate"] = ablation_name(c.ablate);
  j["threads"] = c.threads;
  return j.dump(2);
}

uint64_t effective_seed(uint64_t config_seed) {
  if (const char* env = std::getenv("SPF_SEED")) {
    return std::strtoull(env, nullptr, 10);
  }
  return config_seed;
}

PipelineOutputs run_pipeline(const SceneSpec& scene, const PipelineConfig& config_in,
                             const std::filesystem::path& out_dir) {
  PipelineConfig config = config_in;
  config.validate();
  config.seed = effective_seed(config.seed);
  std::filesystem::create_directories(out_dir);

  SceneSpec seeded_scene = scene;
  seeded_scene.seed = config.seed;

  PointCloud cloud = generate_scene(seeded_scene);

  uint32_t class_count = 0;
  for (uint32_t label : cloud.gt_labels) class_count = std::max(class_count, label + 1);
  EmbeddingModel model;
  model.dim = config.embed_dim;
  model.sigma_emb = config.sigma_emb;
  model.ray_fraction = config.ray_fraction;
  model.seed = config.seed;
  model.prototypes = make_prototypes(class_count, config.embed_dim, config.seed);

  GridParams grid = fit_grid(cloud, config.voxel_size, config.scales, config.grid_margin);
  PaintedScene painted = paint_field(cloud, model, grid);

  SuperpointPartition partition = build_superpoints(cloud, config.cut);

  TrainConfig train_cfg = config.train;
  train_cfg.seed = config.seed;
  if (config.ablate == Ablation::kConsistency || config.ablate == Ablation::kBoth) {
    train_cfg.lambda_c = 0.0;
  }
  TrainResult trained = train(painted.field, painted.supervision, cloud.positions, partition,
                              train_cfg);

  MergeConfig merge_cfg = config.merge;
  if (config.ablate == Ablation::kAffinity || config.ablate == Ablation::kBoth) {
    merge_cfg.use_affinity = false;
  }
  SegmentationResult seg =
      assign_classes(painted.field, partition, cloud.positions, painted.bank, merge_cfg);

  ConfusionMatrix matrix = confusion(seg.point_labels, cloud.gt_labels, class_count);

  PipelineOutputs outputs;
  outputs.cloud_ply = out_dir / "scene.ply";
  outputs.partition = out_dir / "superpoints.spp1";
  outputs.field = out_dir / "field.spf1";
  outputs.labeled_ply = out_dir / "labels.ply";
  outputs.metrics_json = out_dir / "metrics.json";
  outputs.miou = miou(matrix);
  outputs.macc = macc(matrix);

  io::write_ply(cloud, outputs.cloud_ply);
  io::write_partition(partition, outputs.partition);
  io::write_field(painted.field, outputs.field);
  io::write_loss_csv(trained.log, out_dir / "loss.csv");
  io::write_labeled_ply(cloud, seg.point_labels, outputs.labeled_ply);
  std::vector<std::string> class_names;
  for (const auto& cls : painted.bank.classes) class_names.push_back(cls.name);
  io::write_scores_csv(seg, class_names, out_dir / "scores.csv");
  io::write_labelbank(painted.bank, out_dir / "labelbank.json");
  io::write_metrics_json(matrix, outputs.metrics_json);
  write_run_manifest(seeded_scene, config, outputs, out_dir / "run_manifest.json");
  return outputs;
}

void write_run_manifest(const SceneSpec& scene, const PipelineConfig& config,
                        const PipelineOutputs& outputs, const std::filesystem::path& path) {
  json j;
  j["scene"] = json::parse(scene_spec_to_json(scene));
  j["config"] = json::parse(config_to_json(config));
  j["seed"] = config.seed;
  j["outputs"] = {{"cloud", outputs.cloud_ply.filename().string()},
                  {"partition", outputs.partition.filename().string()},
                  {"field", outputs.field.filename().string()},
                  {"labels", outputs.labeled_ply.filename().string()},
                  {"metrics", outputs.metrics_json.filename().string()}};
  j["metrics"] = {{"miou", outputs.miou}, {"macc", outputs.macc}};
  std::ofstream out(path);
  if (!out) throw FileNotFound("cannot write manifest: " + path.string());
  out << j.dump(2) << "\n";
}

}  // namespace spnerf
