#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "spnerf/errors.hpp"
#include "spnerf/evaluation.hpp"
#include "spnerf/geometry.hpp"
#include "spnerf/io.hpp"
#include "spnerf/pipeline.hpp"
#include "spnerf/superpoints.hpp"
#include "spnerf/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace spnerf;

namespace {

bool g_json_logs = false;

void log_event(const std::string& event, const json& fields) {
  if (g_json_logs) {
    json j = fields;
    j["event"] = event;
    std::cout << j.dump() << "\n";
  } else {
    std::ostringstream line;
    line << event;
    for (auto it = fields.begin(); it != fields.end(); ++it) {
      line << " " << it.key() << "=" << it.value().dump();
    }
    std::cout << line.str() << "\n";
  }
}

std::string read_text_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw FileNotFound(path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

PipelineConfig load_config(const std::string& config_path) {
  if (config_path.empty()) return default_pipeline_config();
  return config_from_json(read_text_file(config_path));
}

SceneSpec load_scene(const std::string& scene_path, uint64_t seed) {
  SceneSpec spec =
      scene_path.empty() ? default_desk_scene(seed) : scene_spec_from_json(read_text_file(scene_path));
  if (!scene_path.empty()) spec.seed = seed;
  return spec;
}

PointCloud load_cloud_with_normals(const std::string& path, uint32_t knn_k) {
  PointCloud cloud = io::read_ply(path);
  if (!cloud.has_normals()) {
    log_event("estimate_normals", {{"points", cloud.size()}, {"k", knn_k}});
    cloud.normals = estimate_normals(cloud, knn_k);
  }
  return cloud;
}

int cmd_synth(const std::string& scene_path, uint64_t seed, const std::string& out_path) {
  SceneSpec spec = load_scene(scene_path, effective_seed(seed));
  spec.seed = effective_seed(spec.seed);
  PointCloud cloud = generate_scene(spec);
  io::write_ply(cloud, out_path);
  log_event("synth", {{"points", cloud.size()}, {"seed", spec.seed}, {"out", out_path}});
  return 0;
}

int cmd_superpoints(const std::string& in_path, const std::string& out_path, const CutParams& cut) {
  PointCloud cloud = load_cloud_with_normals(in_path, cut.knn_k);
  SuperpointPartition part = build_superpoints(cloud, cut);
  io::write_partition(part, out_path);
  log_event("superpoints",
            {{"points", cloud.size()}, {"superpoints", part.superpoint_count}, {"out", out_path}});
  return 0;
}

int cmd_train(const std::string& in_path, const std::string& partition_path,
              const std::string& config_path, const std::string& out_dir_path) {
  PipelineConfig config = load_config(config_path);
  config.seed = effective_seed(config.seed);
  fs::path out_dir(out_dir_path);
  fs::create_directories(out_dir);

  PointCloud cloud = io::read_ply(in_path);
  if (!cloud.has_labels()) {
    throw MissingProperty("training supervision needs a label column in " + in_path);
  }
  if (!cloud.has_normals()) cloud.normals = estimate_normals(cloud, config.cut.knn_k);

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

  SuperpointPartition partition = partition_path.empty() ? build_superpoints(cloud, config.cut)
                                                         : io::read_partition(partition_path);

  TrainConfig train_cfg = config.train;
  train_cfg.seed = config.seed;
  if (config.ablate == Ablation::kConsistency || config.ablate == Ablation::kBoth) {
    train_cfg.lambda_c = 0.0;
  }
  TrainResult trained = train(painted.field, painted.supervision, cloud.positions, partition,
                              train_cfg);

  io::write_field(painted.field, out_dir / "field.spf1");
  io::write_labelbank(painted.bank, out_dir / "labelbank.json");
  io::write_loss_csv(trained.log, out_dir / "loss.csv");
  io::write_partition(partition, out_dir / "superpoints.spp1");
  log_event("train", {{"iterations", trained.log.size()},
                      {"final_density_loss", trained.log.empty() ? 0.0 : trained.log.back().density},
                      {"out", out_dir.string()}});
  return 0;
}

int cmd_segment(const std::string& cloud_path, const std::string& field_path,
                const std::string& partition_path, const std::string& bank_path,
                const std::string& out_path, const std::string& scores_path,
                const MergeConfig& merge) {
  PointCloud cloud = io::read_ply(cloud_path);
  FeatureField field = io::read_field(field_path);
  SuperpointPartition partition = io::read_partition(partition_path);
  LabelBank bank = io::read_labelbank(bank_path);

  SegmentationResult seg = assign_classes(field, partition, cloud.positions, bank, merge);
  io::write_labeled_ply(cloud, seg.point_labels, out_path);
  if (!scores_path.empty()) {
    std::vector<std::string> class_names;
    for (const auto& cls : bank.classes) class_names.push_back(cls.name);
    io::write_scores_csv(seg, class_names, scores_path);
  }
  log_event("segment", {{"superpoints", seg.superpoint_count},
                        {"classes", seg.class_count},
                        {"out", out_path}});
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path,
             const std::string& out_path) {
  PointCloud pred = io::read_ply(pred_path);
  PointCloud gt = io::read_ply(gt_path);
  if (!pred.has_labels()) throw MissingProperty("prediction cloud has no label column");
  if (!gt.has_labels()) throw MissingProperty("ground-truth cloud has no label column");
  uint32_t class_count = 0;
  for (uint32_t label : gt.gt_labels) {
    if (label != kIgnoreLabel) class_count = std::max(class_count, label + 1);
  }
  ConfusionMatrix matrix = confusion(pred.gt_labels, gt.gt_labels, class_count);
  if (!out_path.empty()) io::write_metrics_json(matrix, out_path);
  log_event("eval", {{"miou", miou(matrix)}, {"macc", macc(matrix)}, {"ignored", matrix.ignored}});
  return 0;
}

int cmd_pipeline(const std::string& scene_path, const std::string& config_path, uint64_t seed,
                 bool seed_set, double sigma_emb, bool sigma_set, const std::string& ablate,
                 uint32_t threads, bool threads_set, const std::string& out_dir) {
  PipelineConfig config = load_config(config_path);
  if (seed_set) config.seed = seed;
  if (sigma_set) config.sigma_emb = sigma_emb;
  if (threads_set) config.threads = threads;
  if (ablate == "affinity") config.ablate = Ablation::kAffinity;
  else if (ablate == "consistency") config.ablate = Ablation::kConsistency;
  else if (ablate == "both") config.ablate = Ablation::kBoth;
  else if (!ablate.empty() && ablate != "none") throw ConfigError("unknown ablation: " + ablate);

  SceneSpec scene = load_scene(scene_path, config.seed);
  PipelineOutputs out = run_pipeline(scene, config, out_dir);
  log_event("pipeline", {{"miou", out.miou},
                         {"macc", out.macc},
                         {"metrics", out.metrics_json.string()},
                         {"out", out_dir}});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superpoint-based zero-shot point cloud segmentation"};
  app.require_subcommand(1);
  app.add_flag("--json", g_json_logs, "Emit machine-readable JSON log lines");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic labeled scene");
  std::string synth_scene, synth_out = "scene.ply";
  uint64_t synth_seed = 1;
  synth->add_option("--scene", synth_scene, "Scene spec JSON (defaults to the built-in room)");
  synth->add_option("--seed", synth_seed, "Sampling seed");
  synth->add_option("--out", synth_out, "Output PLY path");

  // superpoints
  auto* sp = app.add_subcommand("superpoints", "Over-segment a cloud into superpoints");
  std::string sp_in, sp_out = "superpoints.spp1";
  CutParams cut;
  sp->add_option("--in", sp_in, "Input PLY")->required();
  sp->add_option("--out", sp_out, "Output partition path");
  sp->add_option("--k-thresh", cut.k_thresh, "Merge threshold scale");
  sp->add_option("--min-size", cut.min_size, "Minimum superpoint size");
  sp->add_option("--knn-k", cut.knn_k, "Neighbors per point");

  // train
  auto* tr = app.add_subcommand("train", "Train the multi-scale feature field");
  std::string tr_in, tr_partition, tr_config, tr_out = "train_out";
  tr->add_option("--in", tr_in, "Labeled PLY with supervision classes")->required();
  tr->add_option("--partition", tr_partition, "Superpoint partition (built if omitted)");
  tr->add_option("--config", tr_config, "Pipeline config JSON");
  tr->add_option("--out", tr_out, "Output directory");

  // segment
  auto* seg = app.add_subcommand("segment", "Assign classes to superpoints");
  std::string seg_cloud, seg_field, seg_partition, seg_bank, seg_out = "labels.ply", seg_scores;
  MergeConfig merge;
  bool no_affinity = false;
  seg->add_option("--cloud", seg_cloud, "Scene PLY")->required();
  seg->add_option("--field", seg_field, "Trained field checkpoint")->required();
  seg->add_option("--partition", seg_partition, "Superpoint partition")->required();
  seg->add_option("--bank", seg_bank, "Label bank JSON")->required();
  seg->add_option("--out", seg_out, "Labeled output PLY");
  seg->add_option("--scores", seg_scores, "Per-superpoint score CSV");
  seg->add_option("--w", merge.affinity_weight, "Relevancy scale factor");
  seg->add_option("--np", merge.points_per_superpoint, "Sampled points per superpoint");
  seg->add_option("--na", merge.affinity_count, "Positive/negative superpoints per class");
  seg->add_flag("--no-affinity", no_affinity, "Rank by plain relevancy only");

  // eval
  auto* ev = app.add_subcommand("eval", "Compare predicted labels against ground truth");
  std::string ev_pred, ev_gt, ev_out;
  ev->add_option("--pred", ev_pred, "Predicted labeled PLY")->required();
  ev->add_option("--gt", ev_gt, "Ground-truth labeled PLY")->required();
  ev->add_option("--out", ev_out, "Metrics JSON path");

  // pipeline
  auto* pl = app.add_subcommand("pipeline", "Scene generation through evaluation in one run");
  std::string pl_scene, pl_config, pl_ablate, pl_out = "pipeline_out";
  uint64_t pl_seed = 1;
  double pl_sigma = 0.1;
  uint32_t pl_threads = 1;
  auto* pl_seed_opt = pl->add_option("--seed", pl_seed, "Run seed");
  auto* pl_sigma_opt = pl->add_option("--sigma-emb", pl_sigma, "Supervision embedding noise");
  auto* pl_threads_opt = pl->add_option("--threads", pl_threads, "Worker threads");
  pl->add_option("--scene", pl_scene, "Scene spec JSON (defaults to the built-in room)");
  pl->add_option("--config", pl_config, "Pipeline config JSON");
  pl->add_option("--ablate", pl_ablate, "Drop components: affinity, consistency, or both");
  pl->add_option("--out", pl_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*synth) return cmd_synth(synth_scene, synth_seed, synth_out);
    if (*sp) return cmd_superpoints(sp_in, sp_out, cut);
    if (*tr) return cmd_train(tr_in, tr_partition, tr_config, tr_out);
    if (*seg) {
      merge.use_affinity = !no_affinity;
      return cmd_segment(seg_cloud, seg_field, seg_partition, seg_bank, seg_out, seg_scores, merge);
    }
    if (*ev) return cmd_eval(ev_pred, ev_gt, ev_out);
    if (*pl) {
      return cmd_pipeline(pl_scene, pl_config, pl_seed, pl_seed_opt->count() > 0, pl_sigma,
                          pl_sigma_opt->count() > 0, pl_ablate, pl_threads,
                          pl_threads_opt->count() > 0, pl_out);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case Error::Kind::Io: return 2;
      case Error::Kind::Numeric: return 3;
      case Error::Kind::Validation: return 4;
    }
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}
