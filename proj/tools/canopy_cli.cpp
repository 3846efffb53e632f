// Command-line front end for the canopy pipeline:
//   synth    generate a small self-contained demo scene
//   tile     extract masked crown tiles from orthomosaics
//   split    stratified tree-level splits + species catalog
//   train    fine-tune a backbone with early stopping
//   distill  cross-scale teacher/student distillation
//   evaluate metrics over the held-out test trees
//   report   compare metrics files side by side
//
// Every stage reads the same JSON run config and writes its artifacts under
// the configured output directory, tagged with a hash of the config so that
// mixed-provenance comparisons are caught in `report`.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "canopy/backbones.hpp"
#include "canopy/core_types.hpp"
#include "canopy/distiller.hpp"
#include "canopy/errors.hpp"
#include "canopy/evaluator.hpp"
#include "canopy/preprocessing.hpp"
#include "canopy/raster_tiler.hpp"
#include "canopy/split_manager.hpp"
#include "canopy/synthetic.hpp"
#include "canopy/trainer.hpp"

namespace fs = std::filesystem;
using canopy::ConfigError;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw canopy::IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw canopy::ParseError(path + ": " + e.what());
  }
  return j;
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string config_hash(const json& cfg) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(cfg.dump())));
  return buf;
}

// Typed lookup with a dotted field path in the error message.
const json* find_path(const json& root, const std::string& dotted) {
  const json* cur = &root;
  std::size_t start = 0;
  while (start <= dotted.size()) {
    std::size_t dot = dotted.find('.', start);
    std::string key = dotted.substr(start, dot == std::string::npos ? dot : dot - start);
    if (!cur->is_object() || !cur->contains(key)) return nullptr;
    cur = &(*cur)[key];
    if (dot == std::string::npos) return cur;
    start = dot + 1;
  }
  return nullptr;
}

template <typename T>
T require(const json& root, const std::string& dotted) {
  const json* v = find_path(root, dotted);
  if (!v) throw ConfigError("missing required field: " + dotted);
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type for field: " + dotted);
  }
}

template <typename T>
T optional_field(const json& root, const std::string& dotted, T fallback) {
  const json* v = find_path(root, dotted);
  if (!v) return fallback;
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError("wrong type for field: " + dotted);
  }
}

struct RunConfig {
  json raw;
  std::string hash;
  std::uint64_t seed = 0;
  std::string out_dir;
};

RunConfig load_config(const std::string& path) {
  RunConfig cfg;
  cfg.raw = load_json(path);
  cfg.hash = config_hash(cfg.raw);
  cfg.seed = require<std::uint64_t>(cfg.raw, "seed");
  cfg.out_dir = require<std::string>(cfg.raw, "data.out_dir");
  fs::create_directories(cfg.out_dir);
  return cfg;
}

void write_run_metadata(const RunConfig& cfg, const std::string& command) {
  json meta = {{"command", command}, {"seed", cfg.seed}, {"config_hash", cfg.hash}};
  std::ofstream out(fs::path(cfg.out_dir) / ("run_" + command + ".json"));
  out << meta.dump(2) << '\n';
}

std::vector<canopy::AcquisitionDate> read_dates(const RunConfig& cfg) {
  const json* arr = find_path(cfg.raw, "data.dates");
  if (!arr || !arr->is_array() || arr->empty())
    throw ConfigError("missing required field: data.dates");
  std::vector<canopy::AcquisitionDate> dates;
  for (const json& d : *arr) {
    canopy::AcquisitionDate a;
    if (!d.contains("date_id") || !d.contains("raster"))
      throw ConfigError("data.dates entries need date_id and raster");
    a.date_id = d["date_id"].get<std::string>();
    a.raster_uri = d["raster"].get<std::string>();
    dates.push_back(std::move(a));
  }
  return dates;
}

canopy::AugmentConfig read_augment(const RunConfig& cfg, int target_size) {
  canopy::AugmentConfig a;
  a.target_size = target_size;
  a.crop_scale_min = optional_field(cfg.raw, "augment.crop_scale_min", a.crop_scale_min);
  a.crop_scale_max = optional_field(cfg.raw, "augment.crop_scale_max", a.crop_scale_max);
  a.rotation_max_deg = optional_field(cfg.raw, "augment.rotation_max_deg", a.rotation_max_deg);
  a.hflip_prob = optional_field(cfg.raw, "augment.hflip_prob", a.hflip_prob);
  a.validate();
  return a;
}

canopy::TrainConfig read_train_config(const RunConfig& cfg) {
  canopy::TrainConfig t;
  t.batch_size = optional_field(cfg.raw, "train.batch_size", t.batch_size);
  t.max_epochs = optional_field(cfg.raw, "train.max_epochs", t.max_epochs);
  t.patience = optional_field(cfg.raw, "train.patience", t.patience);
  t.min_delta = optional_field(cfg.raw, "train.min_delta", t.min_delta);
  t.select_by_val_top1 =
      optional_field(cfg.raw, "train.select_by_val_top1", t.select_by_val_top1);
  std::string prec = optional_field<std::string>(cfg.raw, "train.precision", "fp32");
  if (prec == "fp32")
    t.precision = canopy::Precision::fp32;
  else if (prec == "mixed_fp16")
    t.precision = canopy::Precision::mixed_fp16;
  else
    throw ConfigError("train.precision must be fp32 or mixed_fp16");
  t.seed = cfg.seed;
  t.validate();
  return t;
}

canopy::BackboneSpec read_backbone(const RunConfig& cfg) {
  canopy::BackboneSpec spec =
      canopy::backbone_spec(require<std::string>(cfg.raw, "backbone"));
  spec.weights_path = optional_field<std::string>(cfg.raw, "train.weights", "");
  return spec;
}

std::vector<canopy::TileSample> read_workspace_manifest(const RunConfig& cfg) {
  std::string path = (fs::path(cfg.out_dir) / "manifest.ndjson").string();
  if (!fs::exists(path))
    throw canopy::DependencyError("no manifest at " + path + "; run `tile` first");
  return canopy::read_manifest(path);
}

canopy::SplitAssignment read_workspace_assignment(const RunConfig& cfg) {
  std::string path = (fs::path(cfg.out_dir) / "assignment.txt").string();
  if (!fs::exists(path))
    throw canopy::DependencyError("no assignment at " + path + "; run `split` first");
  return canopy::read_assignment(path);
}

canopy::SpeciesCatalog read_workspace_catalog(const RunConfig& cfg) {
  std::string path = (fs::path(cfg.out_dir) / "catalog.csv").string();
  if (!fs::exists(path))
    throw canopy::DependencyError("no catalog at " + path + "; run `split` first");
  return canopy::read_catalog(path);
}

std::vector<canopy::TileSample> filter_view(const std::vector<canopy::TileSample>& in,
                                            canopy::ViewKind view) {
  std::vector<canopy::TileSample> out;
  for (const auto& s : in)
    if (s.view == view) out.push_back(s);
  return out;
}

// ---------------------------------------------------------------- commands

int cmd_synth(const std::string& out_dir, const canopy::SyntheticSceneOptions& opt) {
  canopy::SyntheticScene scene = canopy::generate_scene(out_dir, opt);

  json cfg;
  cfg["seed"] = opt.seed;
  cfg["backbone"] = "tiny_reference";
  cfg["data"]["polygons"] = scene.polygons_path;
  cfg["data"]["closeups_manifest"] = scene.closeups_path;
  cfg["data"]["tile_size"] = 64;
  cfg["data"]["out_dir"] = (fs::path(out_dir) / "work").string();
  json dates = json::array();
  for (const auto& d : scene.dates)
    dates.push_back({{"date_id", d.date_id}, {"raster", d.raster_uri}});
  cfg["data"]["dates"] = dates;
  cfg["split"] = {{"r_train", 0.7}, {"r_val", 0.15}, {"r_test", 0.15}};
  cfg["train"] = {{"batch_size", 8}, {"max_epochs", 6}, {"patience", 3},
                  {"min_delta", 0.001}, {"precision", "fp32"}};
  cfg["distill"] = {{"lambda", 0.5}, {"pair_cap_per_tree", 2}};
  cfg["evaluate"] = {{"mode", "soft_voting"}, {"view", "crown_view"}};
  std::string cfg_path = (fs::path(out_dir) / "run_config.json").string();
  std::ofstream out(cfg_path);
  out << cfg.dump(2) << '\n';

  std::cout << "scene: " << scene.dates.size() << " dates, "
            << scene.species_names.size() << " species\n"
            << "config: " << cfg_path << "\n";
  return 0;
}

int cmd_tile(const RunConfig& cfg) {
  auto polygons = canopy::read_polygons_geojson(require<std::string>(cfg.raw, "data.polygons"));
  auto dates = read_dates(cfg);
  int tile_size = optional_field(cfg.raw, "data.tile_size", canopy::kDefaultTileSize);

  canopy::TilingSummary summary =
      canopy::tile_dataset(polygons, dates, tile_size, cfg.out_dir);

  // Fold close-up photos into the workspace manifest so downstream stages
  // see one unified sample list. Their paths become absolute because they
  // live outside the workspace.
  std::string closeups = optional_field<std::string>(cfg.raw, "data.closeups_manifest", "");
  std::string manifest_path = (fs::path(cfg.out_dir) / "manifest.ndjson").string();
  if (!closeups.empty()) {
    auto merged = canopy::read_manifest(manifest_path);
    fs::path closeup_root = fs::path(closeups).parent_path();
    for (canopy::TileSample s : canopy::read_manifest(closeups)) {
      fs::path p = s.image_path;
      if (p.is_relative()) s.image_path = (closeup_root / p).string();
      merged.push_back(std::move(s));
    }
    canopy::write_manifest(merged, manifest_path);
  }

  for (const auto& w : summary.warnings) std::cerr << "warning: " << w << "\n";
  std::cout << "polygons processed: " << summary.polygons_processed
            << "  skipped: " << summary.polygons_skipped
            << "  tiles written: " << summary.tiles_written << "\n"
            << "manifest: " << manifest_path << "\n";
  write_run_metadata(cfg, "tile");
  return 0;
}

int cmd_split(const RunConfig& cfg) {
  auto manifest = read_workspace_manifest(cfg);
  canopy::SplitRatios ratios;
  ratios.train = optional_field(cfg.raw, "split.r_train", ratios.train);
  ratios.val = optional_field(cfg.raw, "split.r_val", ratios.val);
  ratios.test = optional_field(cfg.raw, "split.r_test", ratios.test);

  auto trees = canopy::labeled_trees(manifest);
  if (trees.empty()) throw ConfigError("manifest holds no labeled trees");
  canopy::SplitAssignment assignment = canopy::assign_splits(trees, ratios, cfg.seed);
  canopy::SplitSamples split = canopy::expand_to_samples(assignment, manifest);
  canopy::LeakageReport leakage = canopy::verify_no_leakage(split);
  canopy::write_leakage_report(leakage,
                               (fs::path(cfg.out_dir) / "leakage.json").string());
  if (!leakage.clean())
    throw canopy::ConsistencyError("tree-level leakage across splits detected");

  // Species names, where the polygon source provides them.
  std::map<int, std::string> name_of_label;
  std::string polygons_path = optional_field<std::string>(cfg.raw, "data.polygons", "");
  if (!polygons_path.empty() && fs::exists(polygons_path)) {
    auto names = canopy::read_species_names_geojson(polygons_path);
    for (const auto& t : trees) {
      auto it = names.find(t.tree_id);
      if (it != names.end()) name_of_label.emplace(t.species_label, it->second);
    }
  }

  // Tile counts per provisional label and split.
  struct Counts {
    long long train = 0, val = 0, test = 0;
  };
  std::map<int, Counts> counts;
  auto tally = [&counts](const std::vector<canopy::TileSample>& ss, long long Counts::*m) {
    for (const auto& s : ss)
      if (s.species_label) counts[*s.species_label].*m += 1;
  };
  tally(split.train, &Counts::train);
  tally(split.val, &Counts::val);
  tally(split.test, &Counts::test);

  // Final class indices: descending train count, lexicographic name tiebreak.
  struct Entry {
    int old_label;
    std::string name;
    Counts c;
  };
  std::vector<Entry> entries;
  for (const auto& [label, c] : counts) {
    auto it = name_of_label.find(label);
    char fallback[32];
    std::snprintf(fallback, sizeof(fallback), "class_%03d", label);
    entries.push_back({label, it != name_of_label.end() ? it->second : fallback, c});
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.c.train != b.c.train) return a.c.train > b.c.train;
    return a.name < b.name;
  });

  canopy::SpeciesCatalog catalog;
  std::map<int, int> remap;
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const Entry& e = entries[i];
    remap[e.old_label] = static_cast<int>(i);
    canopy::SpeciesEntry se;
    se.class_index = static_cast<int>(i);
    se.scientific_name = e.name;
    se.train_count = e.c.train;
    se.val_count = e.c.val;
    se.test_count = e.c.test;
    catalog.species.push_back(std::move(se));
  }
  catalog.validate();

  for (auto& s : manifest)
    if (s.species_label) s.species_label = remap.at(*s.species_label);

  canopy::write_manifest(manifest, (fs::path(cfg.out_dir) / "manifest.ndjson").string());
  canopy::write_catalog(catalog, (fs::path(cfg.out_dir) / "catalog.csv").string());
  canopy::write_assignment(assignment,
                           (fs::path(cfg.out_dir) / "assignment.txt").string());

  std::cout << "trees: " << trees.size() << "  species: " << catalog.n_species()
            << "  tiles train/val/test: " << split.train.size() << "/"
            << split.val.size() << "/" << split.test.size()
            << "  leakage: " << (leakage.clean() ? "none" : "FOUND") << "\n";
  write_run_metadata(cfg, "split");
  return 0;
}

int cmd_train(const RunConfig& cfg) {
  auto manifest = read_workspace_manifest(cfg);
  auto assignment = read_workspace_assignment(cfg);
  auto catalog = read_workspace_catalog(cfg);
  canopy::BackboneSpec spec = read_backbone(cfg);
  canopy::TrainConfig tconf = read_train_config(cfg);
  canopy::AugmentConfig augment = read_augment(cfg, spec.input_size);

  canopy::SplitSamples split = canopy::expand_to_samples(assignment, manifest);
  canopy::ViewKind view = canopy::view_from_string(
      optional_field<std::string>(cfg.raw, "train.view", "crown_view"));
  canopy::TileDataset train_set(filter_view(split.train, view), cfg.out_dir);
  canopy::TileDataset val_set(filter_view(split.val, view), cfg.out_dir);
  if (train_set.size() == 0 || val_set.size() == 0)
    throw ConfigError("empty train or val set for view " + canopy::to_string(view));

  auto model = canopy::create_model(spec, catalog.n_species(), cfg.seed);
  std::string ckpt = (fs::path(cfg.out_dir) / "checkpoints" / spec.name).string();
  canopy::TrainHistory history =
      canopy::train(*model, train_set, val_set, tconf, augment, catalog, ckpt);

  std::cout << "stopped at epoch " << history.stopped_epoch << ", best epoch "
            << history.best_epoch << " (val_loss "
            << history.epochs[history.best_epoch - 1].val_loss << ", val_top1 "
            << history.epochs[history.best_epoch - 1].val_top1 << ")\n"
            << "checkpoint: " << ckpt << "\n";
  write_run_metadata(cfg, "train");
  return 0;
}

int cmd_distill(const RunConfig& cfg) {
  auto manifest = read_workspace_manifest(cfg);
  auto assignment = read_workspace_assignment(cfg);
  auto catalog = read_workspace_catalog(cfg);
  canopy::BackboneSpec spec = read_backbone(cfg);

  std::string teacher_dir = optional_field<std::string>(cfg.raw, "distill.teacher_checkpoint",
                                                        "");
  if (teacher_dir.empty())
    teacher_dir = (fs::path(cfg.out_dir) / "checkpoints" / spec.name).string();
  if (!fs::exists(teacher_dir))
    throw canopy::DependencyError("no teacher checkpoint at " + teacher_dir +
                                  "; run `train` first or set distill.teacher_checkpoint");
  auto teacher = canopy::load_checkpoint(teacher_dir);

  canopy::DistillConfig dconf;
  dconf.lambda = optional_field(cfg.raw, "distill.lambda", dconf.lambda);
  dconf.pair_cap_per_tree =
      optional_field(cfg.raw, "distill.pair_cap_per_tree", dconf.pair_cap_per_tree);
  dconf.same_month_only =
      optional_field(cfg.raw, "distill.same_month_only", dconf.same_month_only);
  dconf.train = read_train_config(cfg);
  dconf.validate();
  canopy::AugmentConfig augment = read_augment(cfg, spec.input_size);

  auto pairs = canopy::build_pairs(manifest, assignment, dconf.pair_cap_per_tree,
                                   dconf.same_month_only, cfg.seed);
  canopy::SplitSamples split = canopy::expand_to_samples(assignment, manifest);
  canopy::TileDataset train_set(filter_view(split.train, canopy::ViewKind::crown_view),
                                cfg.out_dir);
  canopy::TileDataset val_set(filter_view(split.val, canopy::ViewKind::crown_view),
                              cfg.out_dir);

  auto student = canopy::create_model(spec, catalog.n_species(), cfg.seed + 1);
  std::string ckpt =
      (fs::path(cfg.out_dir) / "checkpoints" / (spec.name + "-distilled")).string();
  canopy::TrainHistory history = canopy::distill_train(
      *student, *teacher, pairs, train_set, val_set, dconf, augment, catalog, ckpt);

  const auto& best = history.epochs[history.best_epoch - 1];
  std::cout << "pairs: " << pairs.size() << "  stopped at epoch "
            << history.stopped_epoch << ", best epoch " << history.best_epoch
            << " (val_loss " << best.val_loss << ", ce " << best.loss_ce
            << ", distill " << best.loss_distill << ")\n"
            << "checkpoint: " << ckpt << "\n";
  write_run_metadata(cfg, "distill");
  return 0;
}

int cmd_evaluate(const RunConfig& cfg, std::string checkpoint, std::string mode_override,
                 std::string view_override) {
  auto manifest = read_workspace_manifest(cfg);
  auto assignment = read_workspace_assignment(cfg);
  if (checkpoint.empty()) {
    canopy::BackboneSpec spec = read_backbone(cfg);
    checkpoint = (fs::path(cfg.out_dir) / "checkpoints" / spec.name).string();
  }
  if (!fs::exists(checkpoint))
    throw canopy::DependencyError("no checkpoint at " + checkpoint);
  canopy::SpeciesCatalog catalog;
  auto model = canopy::load_checkpoint(checkpoint, &catalog);

  canopy::EvalMode mode = canopy::eval_mode_from_string(
      !mode_override.empty()
          ? mode_override
          : optional_field<std::string>(cfg.raw, "evaluate.mode", "soft_voting"));
  canopy::ViewKind view = canopy::view_from_string(
      !view_override.empty()
          ? view_override
          : optional_field<std::string>(cfg.raw, "evaluate.view", "crown_view"));
  canopy::AugmentConfig preprocessing = read_augment(cfg, model->spec().input_size);

  canopy::TileDataset dataset(manifest, cfg.out_dir);
  canopy::MetricsReport report =
      canopy::evaluate(*model, dataset, assignment, mode, view, preprocessing, catalog);

  std::string metrics_path =
      (fs::path(cfg.out_dir) /
       ("metrics_" + canopy::to_string(mode) + "_" + canopy::to_string(view) + ".json"))
          .string();
  canopy::write_metrics_json(report, metrics_path, cfg.hash);
  std::cout << canopy::render_metrics_table(report) << "metrics: " << metrics_path << "\n";
  write_run_metadata(cfg, "evaluate");
  return 0;
}

int cmd_report(const std::vector<std::string>& files, bool force) {
  if (files.empty()) throw ConfigError("report needs at least one metrics file");
  std::set<std::string> hashes;
  std::printf("%-40s %8s %8s %8s %8s %8s\n", "metrics", "top1", "top5", "macroF1",
              "microF1", "wghtF1");
  for (const auto& f : files) {
    json j = load_json(f);
    std::string h = j.value("config_hash", "");
    if (!h.empty()) hashes.insert(h);
    double top1 = j["top_k"].value("1", 0.0);
    double top5 = j["top_k"].value("5", 0.0);
    const json f1 = j.value("f1", json::object());
    std::printf("%-40s %8.4f %8.4f %8.4f %8.4f %8.4f\n",
                fs::path(f).filename().string().c_str(), top1, top5,
                f1.value("macro", 0.0), f1.value("micro", 0.0),
                f1.value("weighted", 0.0));
  }
  if (hashes.size() > 1 && !force)
    throw ConfigError("metrics files come from different run configs (" +
                      std::to_string(hashes.size()) +
                      " distinct hashes); pass --force to compare anyway");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Crown-tile species classification pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::string synth_out = "scene";
  canopy::SyntheticSceneOptions synth_opt;
  std::string eval_checkpoint;
  std::string eval_mode, eval_view;
  std::vector<std::string> report_files;
  bool report_force = false;

  auto* synth = app.add_subcommand("synth", "Generate a demo scene and run config");
  synth->add_option("--out", synth_out, "Scene output directory");
  synth->add_option("--species", synth_opt.n_species, "Number of species");
  synth->add_option("--trees", synth_opt.trees_per_species, "Labeled trees per species");
  synth->add_option("--unlabeled", synth_opt.unlabeled_per_species,
                    "Unlabeled trees per species");
  synth->add_option("--dates", synth_opt.n_dates, "Number of acquisition dates");
  synth->add_option("--seed", synth_opt.seed, "Scene seed");

  auto add_config = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "Run config JSON")->required();
  };
  auto* tile = app.add_subcommand("tile", "Extract masked crown tiles");
  add_config(tile);
  auto* split = app.add_subcommand("split", "Assign tree-level splits and build the catalog");
  add_config(split);
  auto* train = app.add_subcommand("train", "Fine-tune a backbone");
  add_config(train);
  auto* distill = app.add_subcommand("distill", "Cross-scale distillation");
  add_config(distill);
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate a checkpoint on test trees");
  add_config(evaluate);
  evaluate->add_option("--checkpoint", eval_checkpoint, "Checkpoint directory override");
  evaluate->add_option("--mode", eval_mode, "individual_image | soft_voting");
  evaluate->add_option("--view", eval_view, "crown_view | close_up");
  auto* report = app.add_subcommand("report", "Compare metrics files");
  report->add_option("files", report_files, "metrics JSON files")->required();
  report->add_flag("--force", report_force, "Allow mixed config hashes");

  try {
    app.parse(argc, argv);
    if (synth->parsed()) return cmd_synth(synth_out, synth_opt);
    if (report->parsed()) return cmd_report(report_files, report_force);

    RunConfig cfg = load_config(config_path);
    if (tile->parsed()) return cmd_tile(cfg);
    if (split->parsed()) return cmd_split(cfg);
    if (train->parsed()) return cmd_train(cfg);
    if (distill->parsed()) return cmd_distill(cfg);
    if (evaluate->parsed()) return cmd_evaluate(cfg, eval_checkpoint, eval_mode, eval_view);
    return 2;
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const canopy::ConfigError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const canopy::ValidationError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  } catch (const canopy::DependencyError& e) {
    std::cerr << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << e.what() << "\n";
    return 4;
  }
}
