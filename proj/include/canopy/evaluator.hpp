#pragma once

#include <string>
#include <vector>

#include "canopy/backbones.hpp"
#include "canopy/core_types.hpp"
#include "canopy/split_manager.hpp"
#include "canopy/trainer.hpp"

namespace canopy {

// One softmax record per sample, deterministic eval mode.
std::vector<PredictionRecord> predict_dataset(ModelBundle& model, const TileDataset& data,
                                              const AugmentConfig& preprocessing,
                                              int batch_size = 32);

// Arithmetic mean of the member probability vectors; the mean of simplex
// points stays on the simplex, so no renormalization. date_id becomes
// "aggregate". All records must share tree_id and view.
PredictionRecord soft_vote(const std::vector<PredictionRecord>& records);

// Fraction of records whose true label ranks among the k highest
// probabilities; ties broken by ascending class index.
double topk_accuracy(const std::vector<PredictionRecord>& records, int k);

struct F1Triple {
  double macro = 0.0;
  double micro = 0.0;
  double weighted = 0.0;
};

// Confusion-matrix F1 over argmax predictions. Macro averages all
// n_species catalog classes, zero-filling classes absent from the test
// labels; weighted averages only present classes by support; micro equals
// top-1 accuracy in this single-label setting.
F1Triple f1_scores(const std::vector<PredictionRecord>& records, int n_species);

// Per-class F1 of one class index (0 when the class never appears in labels
// or predictions).
std::vector<double> per_class_f1(const std::vector<PredictionRecord>& records,
                                 int n_species);

struct LongtailReport {
  std::vector<PerSpeciesF1> rows;          // one per catalog species
  std::vector<int> top10;                  // class indices, largest train counts
  std::vector<int> bottom10;               // smallest train counts, zero-F1 excluded

  void write_chart_csv(const SpeciesCatalog& catalog, const std::string& path) const;
};

LongtailReport longtail_report(const std::vector<PredictionRecord>& records,
                               const SpeciesCatalog& catalog);

// predict -> (optional soft_vote per tree) -> top-k + F1 + long tail over
// the test split of the chosen view. Soft voting applies to crown_view
// only; close-ups are single-date (ConfigError otherwise).
MetricsReport evaluate(ModelBundle& model, const TileDataset& full_dataset,
                       const SplitAssignment& assignment, EvalMode mode, ViewKind view,
                       const AugmentConfig& preprocessing, const SpeciesCatalog& catalog);

// Metrics over already-computed records (the model-free core of evaluate).
MetricsReport compute_metrics(const std::vector<PredictionRecord>& records,
                              const SpeciesCatalog& catalog, EvalMode mode, ViewKind view);

void write_metrics_json(const MetricsReport& report, const std::string& path,
                        const std::string& config_hash = "");
std::string render_metrics_table(const MetricsReport& report);

}  // namespace canopy
