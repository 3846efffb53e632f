#include "canopy/distiller.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"

namespace canopy {

namespace fs = std::filesystem;
using nlohmann::json;

void DistillConfig::validate() const {
  if (lambda < 0.0 || lambda > 1.0) throw ConfigError("distill lambda must be in [0,1]");
  train.validate();
}

CosineLossResult cosine_distillation_loss(const Eigen::MatrixXd& student,
                                          const Eigen::MatrixXd& teacher) {
  if (student.rows() != teacher.rows() || student.cols() != teacher.cols())
    throw ConfigError("cosine loss: student/teacher shape mismatch");
  if (student.cols() == 0) throw ConfigError("cosine loss: empty batch");

  const Eigen::Index n = student.cols();
  CosineLossResult r;
  r.grad_student.resize(student.rows(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    Eigen::VectorXd s = student.col(j);
    Eigen::VectorXd t = teacher.col(j);
    double ns = s.norm();
    double nt = t.norm();
    if (ns == 0.0 || nt == 0.0)
      throw NumericError("cosine loss: zero-norm embedding in column " + std::to_string(j));
    double dot = s.dot(t);
    double cos = dot / (ns * nt);
    total += 1.0 - cos;
    // d(1 - cos)/ds = -(t/(|s||t|) - cos * s/|s|^2), then 1/n for the mean.
    r.grad_student.col(j) = -(t / (ns * nt) - cos * s / (ns * ns)) / static_cast<double>(n);
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

CosineLossResult cosine_distillation_loss(const nn::Matrix& student,
                                          const nn::Matrix& teacher) {
  return cosine_distillation_loss(student.cast<double>().eval(),
                                  teacher.cast<double>().eval());
}

namespace {

// YYYY-MM prefix of an ISO date id.
std::string month_of(const std::string& date_id) {
  return date_id.size() >= 7 ? date_id.substr(0, 7) : date_id;
}

}  // namespace

std::vector<CrossScalePair> build_pairs(const std::vector<TileSample>& manifest,
                                        const SplitAssignment& assignment,
                                        int pair_cap_per_tree, bool same_month_only,
                                        std::uint64_t seed) {
  std::map<std::string, std::vector<const TileSample*>> crowns, closeups;
  for (const TileSample& s : manifest) {
    if (s.view == ViewKind::crown_view)
      crowns[s.tree_id].push_back(&s);
    else
      closeups[s.tree_id].push_back(&s);
  }

  std::vector<CrossScalePair> pairs;
  Rng root(seed);
  for (const auto& [tree_id, crown_list] : crowns) {
    auto cu_it = closeups.find(tree_id);
    if (cu_it == closeups.end()) continue;

    std::optional<Split> split;
    if (auto a = assignment.by_tree.find(tree_id); a != assignment.by_tree.end())
      split = a->second;
    if (split == Split::test) continue;  // hygiene: test trees never train the student

    std::vector<CrossScalePair> tree_pairs;
    for (const TileSample* crown : crown_list) {
      for (const TileSample* closeup : cu_it->second) {
        if (same_month_only && month_of(crown->date_id) != month_of(closeup->date_id))
          continue;
        tree_pairs.push_back({tree_id, *crown, *closeup, split});
      }
    }
    if (pair_cap_per_tree > 0 &&
        tree_pairs.size() > static_cast<std::size_t>(pair_cap_per_tree)) {
      Rng stream = root.split(Rng::mix(std::hash<std::string>{}(tree_id)));
      stream.shuffle(tree_pairs);
      tree_pairs.resize(static_cast<std::size_t>(pair_cap_per_tree));
    }
    pairs.insert(pairs.end(), tree_pairs.begin(), tree_pairs.end());
  }
  if (pairs.empty())
    throw ConfigError("no pairable trees: need trees with both crown-view and close-up samples");
  return pairs;
}

const EmbeddingCacheEntry* EmbeddingCache::find(const std::string& close_up_path) const {
  for (const EmbeddingCacheEntry& e : entries)
    if (e.close_up_path == close_up_path) return &e;
  return nullptr;
}

EmbeddingCache precompute_teacher_embeddings(ModelBundle& teacher,
                                             const std::vector<CrossScalePair>& pairs,
                                             const std::string& image_root,
                                             const AugmentConfig& teacher_augment) {
  std::map<std::string, std::string> unique;  // path -> tree_id
  for (const CrossScalePair& p : pairs)
    unique.emplace(p.teacher_input.image_path, p.tree_id);

  EmbeddingCache cache;
  const int size = teacher.spec().input_size;
  AugmentConfig cfg = teacher_augment;
  cfg.target_size = size;
  for (const auto& [path, tree_id] : unique) {
    fs::path full = fs::path(path);
    if (full.is_relative()) full = fs::path(image_root) / full;
    FloatImage img = preprocess_eval(read_png(full.string()), cfg);
    nn::Batch batch = nn::Batch::zeros(1, 3, size, size);
    float* dst = batch.sample(0);
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < size; ++y)
        for (int x = 0; x < size; ++x)
          dst[(static_cast<std::size_t>(c) * size + y) * size + x] =
              img.data[(static_cast<std::size_t>(y) * size + x) * 3 + c];
    ForwardResult fwd = teacher.forward(batch, /*train=*/false);
    cache.entries.push_back({tree_id, path, fwd.embeddings.col(0)});
  }
  return cache;
}

void save_embedding_cache(const EmbeddingCache& cache, const std::string& path) {
  std::ofstream blob(path, std::ios::binary);
  if (!blob) throw IoError("cannot write embedding cache: " + path);
  json index = json::array();
  std::size_t offset = 0;
  for (const EmbeddingCacheEntry& e : cache.entries) {
    blob.write(reinterpret_cast<const char*>(e.embedding.data()),
               static_cast<std::streamsize>(e.embedding.size() * sizeof(float)));
    index.push_back({{"tree_id", e.tree_id},
                     {"close_up_path", e.close_up_path},
                     {"offset", offset},
                     {"dim", e.embedding.size()}});
    offset += e.embedding.size() * sizeof(float);
  }
  std::ofstream idx(path + ".json");
  if (!idx) throw IoError("cannot write embedding cache index: " + path + ".json");
  idx << index.dump(2) << '\n';
}

EmbeddingCache load_embedding_cache(const std::string& path) {
  std::ifstream idx(path + ".json");
  if (!idx) throw IoError("cannot open embedding cache index: " + path + ".json");
  json index = json::parse(idx, nullptr, false);
  if (index.is_discarded()) throw ParseError(path + ".json: malformed index");
  std::ifstream blob(path, std::ios::binary);
  if (!blob) throw IoError("cannot open embedding cache: " + path);

  EmbeddingCache cache;
  for (const json& j : index) {
    EmbeddingCacheEntry e;
    e.tree_id = j.at("tree_id").get<std::string>();
    e.close_up_path = j.at("close_up_path").get<std::string>();
    std::size_t dim = j.at("dim").get<std::size_t>();
    e.embedding.resize(static_cast<Eigen::Index>(dim));
    blob.seekg(static_cast<std::streamoff>(j.at("offset").get<std::size_t>()));
    blob.read(reinterpret_cast<char*>(e.embedding.data()),
              static_cast<std::streamsize>(dim * sizeof(float)));
    if (!blob) throw FormatError(path + ": truncated embedding blob");
    cache.entries.push_back(std::move(e));
  }
  return cache;
}

namespace {

// Drives the pair batches inside the shared training loop.
class DistillExtension : public EpochExtension {
 public:
  DistillExtension(std::vector<CrossScalePair> train_pairs,
                   std::vector<CrossScalePair> val_pairs, EmbeddingCache cache,
                   const std::string& image_root, const AugmentConfig& augment,
                   const DistillConfig& config, int student_dim, int teacher_dim)
      : train_pairs_(std::move(train_pairs)),
        val_pairs_(std::move(val_pairs)),
        cache_(std::move(cache)),
        image_root_(image_root),
        augment_(augment),
        config_(config) {
    if (student_dim != teacher_dim) {
      Rng init(Rng::mix(config.train.seed ^ 0x70726f6aULL));
      projection_ = std::make_unique<nn::Linear>("distill.projection", student_dim,
                                                 teacher_dim, init);
      proj_optimizer_ = std::make_unique<nn::AdamW>(projection_->params(),
                                                    1e-3, 0.0);
    }
  }

  double lambda() const override { return config_.lambda; }

  double run_train_batches(ModelBundle& model, nn::AdamW& optimizer, int epoch) override {
    Rng shuffle_rng(Rng::mix(config_.train.seed ^ 0x50414952ULL ^
                             static_cast<std::uint64_t>(epoch)));
    std::vector<std::size_t> order(train_pairs_.size());
    std::iota(order.begin(), order.end(), 0);
    shuffle_rng.shuffle(order);
    Rng aug_root(Rng::mix(config_.train.seed ^ 0x44415547ULL ^
                          static_cast<std::uint64_t>(epoch)));

    const int bs = config_.train.batch_size;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(bs)) {
      std::size_t count = std::min<std::size_t>(bs, order.size() - start);
      nn::Batch batch = make_student_batch(model, order, start, count, &aug_root);
      nn::Matrix targets = teacher_targets(order, start, count);
      ForwardResult fwd = model.forward(batch, /*train=*/true);

      optimizer.zero_grad();
      nn::Matrix student_emb = fwd.embeddings;
      nn::Matrix aligned = student_emb;
      if (projection_) {
        proj_optimizer_->zero_grad();
        aligned = nn::batch_to_matrix(
            projection_->forward(nn::matrix_to_batch(student_emb), true));
      }
      CosineLossResult cos = cosine_distillation_loss(aligned, targets);
      loss_sum += cos.loss * static_cast<double>(count);

      nn::Matrix grad_aligned =
          cos.grad_student.cast<float>() * static_cast<float>(config_.lambda);
      nn::Matrix grad_emb = grad_aligned;
      if (projection_)
        grad_emb =
            nn::batch_to_matrix(projection_->backward(nn::matrix_to_batch(grad_aligned)));
      nn::Matrix zero_logits = nn::Matrix::Zero(model.n_species(), batch.n);
      model.backward(zero_logits, &grad_emb);
      optimizer.step();
      if (projection_) proj_optimizer_->step();
    }
    return loss_sum / static_cast<double>(order.size());
  }

  double validation_loss(ModelBundle& model) override {
    const std::vector<CrossScalePair>& pool =
        val_pairs_.empty() ? train_pairs_ : val_pairs_;
    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), 0);
    const int bs = config_.train.batch_size;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(bs)) {
      std::size_t count = std::min<std::size_t>(bs, order.size() - start);
      nn::Batch batch =
          make_batch_from(pool, model, order, start, count, nullptr);
      nn::Matrix targets = targets_from(pool, order, start, count);
      ForwardResult fwd = model.forward(batch, /*train=*/false);
      nn::Matrix aligned = fwd.embeddings;
      if (projection_)
        aligned = nn::batch_to_matrix(
            projection_->forward(nn::matrix_to_batch(fwd.embeddings), false));
      loss_sum += cosine_distillation_loss(aligned, targets).loss *
                  static_cast<double>(count);
    }
    return loss_sum / static_cast<double>(pool.size());
  }

 private:
  nn::Batch make_student_batch(ModelBundle& model, const std::vector<std::size_t>& order,
                               std::size_t start, std::size_t count, Rng* aug_root) {
    return make_batch_from(train_pairs_, model, order, start, count, aug_root);
  }

  nn::Batch make_batch_from(const std::vector<CrossScalePair>& pool, ModelBundle& model,
                            const std::vector<std::size_t>& order, std::size_t start,
                            std::size_t count, Rng* aug_root) {
    const int size = model.spec().input_size;
    AugmentConfig cfg = augment_;
    cfg.target_size = size;
    nn::Batch batch = nn::Batch::zeros(static_cast<int>(count), 3, size, size);
    for (std::size_t i = 0; i < count; ++i) {
      const CrossScalePair& pair = pool[order[start + i]];
      const RgbImage& img = load_image(pair.student_input.image_path);
      FloatImage f;
      if (aug_root) {
        Rng sample_rng = aug_root->split(order[start + i]);
        f = augment_train(img, cfg, sample_rng);
        normalize_inplace(f, cfg);
      } else {
        f = preprocess_eval(img, cfg);
      }
      float* dst = batch.sample(static_cast<int>(i));
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            dst[(static_cast<std::size_t>(c) * size + y) * size + x] =
                f.data[(static_cast<std::size_t>(y) * size + x) * 3 + c];
    }
    return batch;
  }

  nn::Matrix teacher_targets(const std::vector<std::size_t>& order, std::size_t start,
                             std::size_t count) {
    return targets_from(train_pairs_, order, start, count);
  }

  nn::Matrix targets_from(const std::vector<CrossScalePair>& pool,
                          const std::vector<std::size_t>& order, std::size_t start,
                          std::size_t count) {
    const EmbeddingCacheEntry* first = cache_.entries.empty() ? nullptr : &cache_.entries[0];
    if (!first) throw ConfigError("empty teacher embedding cache");
    nn::Matrix targets(first->embedding.size(), static_cast<Eigen::Index>(count));
    for (std::size_t i = 0; i < count; ++i) {
      const CrossScalePair& pair = pool[order[start + i]];
      const EmbeddingCacheEntry* e = cache_.find(pair.teacher_input.image_path);
      if (!e)
        throw ConsistencyError("no cached teacher embedding for " +
                               pair.teacher_input.image_path);
      targets.col(static_cast<Eigen::Index>(i)) = e->embedding;
    }
    return targets;
  }

  const RgbImage& load_image(const std::string& rel) {
    auto it = image_cache_.find(rel);
    if (it == image_cache_.end()) {
      fs::path p = fs::path(rel);
      if (p.is_relative()) p = fs::path(image_root_) / p;
      it = image_cache_.emplace(rel, read_png(p.string())).first;
    }
    return it->second;
  }

  std::vector<CrossScalePair> train_pairs_;
  std::vector<CrossScalePair> val_pairs_;
  EmbeddingCache cache_;
  std::string image_root_;
  AugmentConfig augment_;
  DistillConfig config_;
  std::unique_ptr<nn::Linear> projection_;
  std::unique_ptr<nn::AdamW> proj_optimizer_;
  std::map<std::string, RgbImage> image_cache_;
};

}  // namespace

TrainHistory distill_train(ModelBundle& student, ModelBundle& teacher,
                           const std::vector<CrossScalePair>& pairs,
                           const TileDataset& labeled_train, const TileDataset& labeled_val,
                           const DistillConfig& config, const AugmentConfig& augment,
                           const SpeciesCatalog& catalog, const std::string& checkpoint_dir) {
  config.validate();
  if (config.lambda > 0.0 && pairs.empty())
    throw ConfigError("lambda > 0 requires cross-scale pairs");
  if (config.lambda < 1.0 && labeled_train.size() == 0)
    throw ConfigError("lambda < 1 requires labeled crown-view samples");

  // lambda = 0 degenerates to plain fine-tuning, same loop, same rng streams.
  if (config.lambda == 0.0)
    return train(student, labeled_train, labeled_val, config.train, augment, catalog,
                 checkpoint_dir);

  std::vector<CrossScalePair> train_pairs, val_pairs;
  for (const CrossScalePair& p : pairs) {
    if (p.split == Split::test)
      throw ConsistencyError("pair list contains a test tree: " + p.tree_id);
    if (p.split == Split::val)
      val_pairs.push_back(p);
    else
      train_pairs.push_back(p);
  }
  if (train_pairs.empty()) throw ConfigError("no trainable pairs after split hygiene");

  EmbeddingCache cache =
      precompute_teacher_embeddings(teacher, pairs, labeled_train.root(), augment);
  int teacher_dim = static_cast<int>(cache.entries.front().embedding.size());
  DistillExtension extension(std::move(train_pairs), std::move(val_pairs), std::move(cache),
                             labeled_train.root(), augment, config,
                             student.spec().embedding_dim, teacher_dim);

  if (config.lambda == 1.0) {
    // Pure alignment: no CE term, epochs iterate pair batches only.
    const TrainConfig& tc = config.train;
    tc.validate();
    nn::AdamW optimizer(student.trainable_params(), student.spec().learning_rate,
                        student.spec().weight_decay);
    TrainHistory history;
    std::vector<double> val_losses;
    std::vector<nn::Matrix> best;
    double best_loss = std::numeric_limits<double>::infinity();
    for (nn::Param* p : student.all_params()) best.push_back(p->value);

    for (int epoch = 1; epoch <= tc.max_epochs; ++epoch) {
      EpochStats stats;
      stats.loss_distill = extension.run_train_batches(student, optimizer, epoch);
      stats.train_loss = stats.loss_distill;
      stats.val_loss = extension.validation_loss(student);
      history.epochs.push_back(stats);
      val_losses.push_back(stats.val_loss);
      if (stats.val_loss < best_loss) {
        best_loss = stats.val_loss;
        std::vector<nn::Param*> params = student.all_params();
        for (std::size_t i = 0; i < params.size(); ++i) best[i] = params[i]->value;
        history.best_epoch = epoch;
      }
      history.stopped_epoch = epoch;
      if (early_stop_check(val_losses, tc.patience, tc.min_delta) == StopDecision::stop)
        break;
    }
    std::vector<nn::Param*> params = student.all_params();
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->value = best[i];
    if (!checkpoint_dir.empty()) {
      student.save(checkpoint_dir, catalog);
      history.write_csv((fs::path(checkpoint_dir) / "history.csv").string());
    }
    return history;
  }

  return train(student, labeled_train, labeled_val, config.train, augment, catalog,
               checkpoint_dir, &extension);
}

}  // namespace canopy
