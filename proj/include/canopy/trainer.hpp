#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "canopy/backbones.hpp"
#include "canopy/core_types.hpp"
#include "canopy/preprocessing.hpp"

namespace canopy {

enum class Precision { fp32, mixed_fp16 };

struct TrainConfig {
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 5;
  double min_delta = 0.001;  // validation-loss units
  Precision precision = Precision::fp32;
  std::uint64_t seed = 0;
  // Checkpoint selection follows the early-stopping quantity (val_loss);
  // val_top1 selection sits behind this flag.
  bool select_by_val_top1 = false;

  void validate() const;
};

struct EpochStats {
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_top1 = 0.0;
  // Component losses; equal to train_loss/0 outside distillation runs.
  double loss_ce = 0.0;
  double loss_distill = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;     // 1-based
  int stopped_epoch = 0;  // 1-based

  void write_csv(const std::string& path) const;
};

enum class StopDecision { keep_training, stop };

// An epoch "improves" iff val_loss < best_so_far - min_delta; best updates
// only on improvement; stop after `patience` consecutive non-improvements.
StopDecision early_stop_check(const std::vector<double>& val_losses, int patience,
                              double min_delta);

// Samples plus the directory their image_path fields are relative to.
// Decoded images are cached in memory after first use.
class TileDataset {
 public:
  TileDataset() = default;
  TileDataset(std::vector<TileSample> samples, std::string root);

  const std::vector<TileSample>& samples() const { return samples_; }
  const std::string& root() const { return root_; }
  std::size_t size() const { return samples_.size(); }
  const RgbImage& image(std::size_t idx) const;

 private:
  std::vector<TileSample> samples_;
  std::string root_;
  mutable std::map<std::string, RgbImage> cache_;
};

// Per-epoch extension point used by the distiller: extra gradient batches
// after the cross-entropy batches, plus a validation-loss component.
class EpochExtension {
 public:
  virtual ~EpochExtension() = default;
  virtual double lambda() const = 0;  // weight on the extension loss
  // Runs the extension's training batches; returns its mean train loss.
  virtual double run_train_batches(ModelBundle& model, nn::AdamW& optimizer,
                                   int epoch) = 0;
  virtual double validation_loss(ModelBundle& model) = 0;
};

// Cross-entropy fine-tuning with AdamW and early stopping. The model holds
// the best-epoch weights on return; pass checkpoint_dir to also persist
// them. Train and val must be tree-disjoint (ConsistencyError otherwise).
TrainHistory train(ModelBundle& model, const TileDataset& train_set,
                   const TileDataset& val_set, const TrainConfig& config,
                   const AugmentConfig& augment, const SpeciesCatalog& catalog,
                   const std::string& checkpoint_dir = "",
                   EpochExtension* extension = nullptr);

struct CrossvalSummary {
  std::vector<TrainHistory> folds;
  double mean_epochs = 0.0;
  double std_epochs = 0.0;
  std::vector<std::string> warnings;
};

// One independent training per stratified fold, fresh model each.
CrossvalSummary run_crossval(const BackboneSpec& spec, const TileDataset& dataset, int k,
                             const TrainConfig& config, const AugmentConfig& augment,
                             const SpeciesCatalog& catalog);

}  // namespace canopy
