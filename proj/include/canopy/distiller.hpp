#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canopy/backbones.hpp"
#include "canopy/core_types.hpp"
#include "canopy/trainer.hpp"

namespace canopy {

// One crown-view (student) / close-up (teacher) combination of a tree.
struct CrossScalePair {
  std::string tree_id;
  TileSample student_input;  // crown_view
  TileSample teacher_input;  // close_up
  std::optional<Split> split;  // empty for unlabeled trees
};

struct DistillConfig {
  double lambda = 0.5;  // weight on the distillation loss; 1-lambda on CE
  TrainConfig train;
  int pair_cap_per_tree = 0;   // 0 = all (crown_date, close_up) combinations
  bool same_month_only = false;  // restrict pairs to matching month (YYYY-MM)

  void validate() const;
};

struct CosineLossResult {
  double loss = 0.0;               // mean over batch, in [0, 2]
  Eigen::MatrixXd grad_student;    // d loss / d student embeddings
};

// L = mean_j (1 - <s_j,t_j> / (|s_j||t_j|)); columns are samples. The
// teacher matrix is a constant: no gradient is produced for it. Zero-norm
// columns raise NumericError.
CosineLossResult cosine_distillation_loss(const Eigen::MatrixXd& student,
                                          const Eigen::MatrixXd& teacher);
CosineLossResult cosine_distillation_loss(const nn::Matrix& student,
                                          const nn::Matrix& teacher);

// All pairable trees: >= 1 close-up and >= 1 crown-view sample. Unlabeled
// trees are included; trees assigned to test are excluded entirely (split
// hygiene). With a cap, each tree keeps a seeded random subset.
std::vector<CrossScalePair> build_pairs(const std::vector<TileSample>& manifest,
                                        const SplitAssignment& assignment,
                                        int pair_cap_per_tree = 0,
                                        bool same_month_only = false,
                                        std::uint64_t seed = 0);

// Frozen-teacher embedding cache, keyed by close-up image path.
struct EmbeddingCacheEntry {
  std::string tree_id;
  std::string close_up_path;
  Eigen::VectorXf embedding;
};

struct EmbeddingCache {
  std::vector<EmbeddingCacheEntry> entries;

  const EmbeddingCacheEntry* find(const std::string& close_up_path) const;
};

// Runs the teacher once per unique close-up image (deterministic eval mode).
EmbeddingCache precompute_teacher_embeddings(ModelBundle& teacher,
                                             const std::vector<CrossScalePair>& pairs,
                                             const std::string& image_root,
                                             const AugmentConfig& teacher_augment);

// index at <path>.json, float32 blob at <path>.
void save_embedding_cache(const EmbeddingCache& cache, const std::string& path);
EmbeddingCache load_embedding_cache(const std::string& path);

// Student fine-tuning under lambda*cosine + (1-lambda)*cross-entropy, early
// stopping on the total validation loss. The teacher is never optimized;
// its parameter checksum is identical before and after.
TrainHistory distill_train(ModelBundle& student, ModelBundle& teacher,
                           const std::vector<CrossScalePair>& pairs,
                           const TileDataset& labeled_train, const TileDataset& labeled_val,
                           const DistillConfig& config, const AugmentConfig& augment,
                           const SpeciesCatalog& catalog,
                           const std::string& checkpoint_dir = "");

}  // namespace canopy
