#include "canopy/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>

#include "canopy/errors.hpp"
#include "canopy/split_manager.hpp"

namespace canopy {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (max_epochs < 1) throw ConfigError("max_epochs must be >= 1");
  if (patience < 1) throw ConfigError("patience must be >= 1");
  if (min_delta < 0.0) throw ConfigError("min_delta must be >= 0");
}

StopDecision early_stop_check(const std::vector<double>& val_losses, int patience,
                              double min_delta) {
  if (val_losses.empty()) throw ConfigError("early_stop_check on empty loss list");
  double best = val_losses.front();
  int streak = 0;
  for (std::size_t i = 1; i < val_losses.size(); ++i) {
    if (val_losses[i] < best - min_delta) {
      best = val_losses[i];
      streak = 0;
    } else {
      ++streak;
    }
    if (streak >= patience) return StopDecision::stop;
  }
  return StopDecision::keep_training;
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write history: " + path);
  out << "epoch,train_loss,val_loss,val_top1,loss_ce,loss_distill\n";
  for (std::size_t i = 0; i < epochs.size(); ++i) {
    const EpochStats& e = epochs[i];
    out << (i + 1) << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_top1 << ','
        << e.loss_ce << ',' << e.loss_distill << '\n';
  }
}

TileDataset::TileDataset(std::vector<TileSample> samples, std::string root)
    : samples_(std::move(samples)), root_(std::move(root)) {}

const RgbImage& TileDataset::image(std::size_t idx) const {
  const TileSample& s = samples_.at(idx);
  auto it = cache_.find(s.image_path);
  if (it == cache_.end()) {
    fs::path p = fs::path(s.image_path);
    if (p.is_relative()) p = fs::path(root_) / p;
    it = cache_.emplace(s.image_path, read_png(p.string())).first;
  }
  return it->second;
}

namespace {

float round_fp16(float v) {
  // Round-trip through IEEE half; emulates the reduced forward precision of
  // mixed fp16 runs. Master weights stay fp32.
  return static_cast<float>(static_cast<Eigen::half>(v));
}

void pack_into_batch(const FloatImage& img, nn::Batch& batch, int slot, bool fp16) {
  float* dst = batch.sample(slot);
  const int s = img.size;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < s; ++y)
      for (int x = 0; x < s; ++x) {
        float v = img.data[(static_cast<std::size_t>(y) * s + x) * 3 + c];
        dst[(static_cast<std::size_t>(c) * s + y) * s + x] = fp16 ? round_fp16(v) : v;
      }
}

struct EvalStats {
  double loss = 0.0;
  double top1 = 0.0;
};

EvalStats evaluate_ce(ModelBundle& model, const TileDataset& data,
                      const AugmentConfig& augment, int batch_size, bool fp16) {
  const int size = model.spec().input_size;
  EvalStats stats;
  std::size_t n = data.size();
  double loss_sum = 0.0;
  long correct = 0;
  for (std::size_t start = 0; start < n; start += batch_size) {
    std::size_t count = std::min<std::size_t>(batch_size, n - start);
    nn::Batch batch = nn::Batch::zeros(static_cast<int>(count), 3, size, size);
    std::vector<int> labels(count);
    for (std::size_t i = 0; i < count; ++i) {
      const TileSample& s = data.samples()[start + i];
      if (!s.species_label)
        throw ConsistencyError("validation sample for tree " + s.tree_id + " has no label");
      labels[i] = *s.species_label;
      FloatImage img = preprocess_eval(data.image(start + i), augment);
      pack_into_batch(img, batch, static_cast<int>(i), fp16);
    }
    ForwardResult fwd = model.forward(batch, /*train=*/false);
    nn::SoftmaxCeResult ce = nn::softmax_cross_entropy(fwd.logits, labels);
    loss_sum += ce.loss * static_cast<double>(count);
    for (std::size_t i = 0; i < count; ++i) {
      int argmax = 0;
      for (int r = 1; r < fwd.logits.rows(); ++r)
        if (fwd.logits(r, static_cast<int>(i)) > fwd.logits(argmax, static_cast<int>(i)))
          argmax = r;
      if (argmax == labels[i]) ++correct;
    }
  }
  stats.loss = loss_sum / static_cast<double>(n);
  stats.top1 = static_cast<double>(correct) / static_cast<double>(n);
  return stats;
}

std::vector<nn::Matrix> snapshot_params(ModelBundle& model) {
  std::vector<nn::Matrix> snap;
  for (nn::Param* p : model.all_params()) snap.push_back(p->value);
  return snap;
}

void restore_params(ModelBundle& model, const std::vector<nn::Matrix>& snap) {
  std::vector<nn::Param*> params = model.all_params();
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace

TrainHistory train(ModelBundle& model, const TileDataset& train_set,
                   const TileDataset& val_set, const TrainConfig& config,
                   const AugmentConfig& augment, const SpeciesCatalog& catalog,
                   const std::string& checkpoint_dir, EpochExtension* extension) {
  config.validate();
  if (train_set.size() == 0) throw ConfigError("empty training set");
  if (val_set.size() == 0) throw ConfigError("empty validation set");

  // Leakage guard: train and val must be tree-disjoint.
  std::set<std::string> train_trees;
  for (const TileSample& s : train_set.samples()) train_trees.insert(s.tree_id);
  for (const TileSample& s : val_set.samples())
    if (train_trees.count(s.tree_id))
      throw ConsistencyError("tree " + s.tree_id + " appears in both train and val");
  for (const TileSample& s : train_set.samples())
    if (!s.species_label)
      throw ConsistencyError("training sample for tree " + s.tree_id + " has no label");

  const bool fp16 = config.precision == Precision::mixed_fp16;
  const int size = model.spec().input_size;
  const double lambda = extension ? extension->lambda() : 0.0;
  const double ce_weight = 1.0 - lambda;

  nn::AdamW optimizer(model.trainable_params(), model.spec().learning_rate,
                      model.spec().weight_decay);

  TrainHistory history;
  std::vector<double> val_losses;
  std::vector<nn::Matrix> best_weights = snapshot_params(model);
  double best_val_loss = std::numeric_limits<double>::infinity();
  double best_val_top1 = -1.0;

  Rng root(config.seed);
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng shuffle_rng = root.split(0x53485546ULL ^ static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order);
    Rng aug_root = root.split(0x41554752ULL ^ static_cast<std::uint64_t>(epoch));

    double ce_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      std::size_t count =
          std::min<std::size_t>(config.batch_size, order.size() - start);
      nn::Batch batch = nn::Batch::zeros(static_cast<int>(count), 3, size, size);
      std::vector<int> labels(count);
      for (std::size_t i = 0; i < count; ++i) {
        std::size_t idx = order[start + i];
        labels[i] = *train_set.samples()[idx].species_label;
        Rng sample_rng = aug_root.split(idx);
        FloatImage img = augment_train(train_set.image(idx), augment, sample_rng);
        normalize_inplace(img, augment);
        pack_into_batch(img, batch, static_cast<int>(i), fp16);
      }
      ForwardResult fwd = model.forward(batch, /*train=*/true);
      nn::SoftmaxCeResult ce = nn::softmax_cross_entropy(fwd.logits, labels);
      ce_sum += ce.loss * static_cast<double>(count);
      optimizer.zero_grad();
      nn::Matrix grad = ce.grad_logits * static_cast<float>(ce_weight);
      model.backward(grad, nullptr);
      optimizer.step();
    }
    double train_ce = ce_sum / static_cast<double>(order.size());

    double train_distill = 0.0;
    if (extension) train_distill = extension->run_train_batches(model, optimizer, epoch);

    EpochStats stats;
    stats.loss_ce = train_ce;
    stats.loss_distill = train_distill;
    stats.train_loss = ce_weight * train_ce + lambda * train_distill;
    EvalStats val = evaluate_ce(model, val_set, augment, config.batch_size, fp16);
    double val_distill = extension ? extension->validation_loss(model) : 0.0;
    stats.val_loss = ce_weight * val.loss + lambda * val_distill;
    stats.val_top1 = val.top1;
    history.epochs.push_back(stats);
    val_losses.push_back(stats.val_loss);

    bool is_best = config.select_by_val_top1 ? stats.val_top1 > best_val_top1
                                             : stats.val_loss < best_val_loss;
    if (is_best) {
      best_val_loss = stats.val_loss;
      best_val_top1 = stats.val_top1;
      best_weights = snapshot_params(model);
      history.best_epoch = epoch;
    }
    history.stopped_epoch = epoch;
    if (early_stop_check(val_losses, config.patience, config.min_delta) ==
        StopDecision::stop)
      break;
  }

  restore_params(model, best_weights);
  if (!checkpoint_dir.empty()) {
    model.save(checkpoint_dir, catalog);
    history.write_csv((fs::path(checkpoint_dir) / "history.csv").string());
  }
  return history;
}

CrossvalSummary run_crossval(const BackboneSpec& spec, const TileDataset& dataset, int k,
                             const TrainConfig& config, const AugmentConfig& augment,
                             const SpeciesCatalog& catalog) {
  if (k < 2) throw ConfigError("cross-validation requires k >= 2");
  CrossvalSummary summary;
  std::vector<SplitAssignment> folds =
      kfold_assign(labeled_trees(dataset.samples()), k, config.seed, &summary.warnings);

  for (std::size_t f = 0; f < folds.size(); ++f) {
    SplitSamples split = expand_to_samples(folds[f], dataset.samples());
    TileDataset fold_train(split.train, dataset.root());
    TileDataset fold_val(split.val, dataset.root());
    auto model = create_model(spec, catalog.n_species(),
                              config.seed + static_cast<std::uint64_t>(f));
    summary.folds.push_back(
        train(*model, fold_train, fold_val, config, augment, catalog));
  }

  double mean = 0.0;
  for (const TrainHistory& h : summary.folds) mean += h.stopped_epoch;
  mean /= static_cast<double>(summary.folds.size());
  double var = 0.0;
  for (const TrainHistory& h : summary.folds) {
    double d = h.stopped_epoch - mean;
    var += d * d;
  }
  var /= static_cast<double>(summary.folds.size());
  summary.mean_epochs = mean;
  summary.std_epochs = std::sqrt(var);
  return summary;
}

}  // namespace canopy
