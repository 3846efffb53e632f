#pragma once

#include <memory>
#include <string>
#include <vector>

#include "canopy/core_types.hpp"
#include "canopy/nn.hpp"

namespace canopy {

struct BackboneSpec {
  std::string name;  // resnet50 | dinov3 | bioclip2 | plantnet | tiny_reference
  int input_size = 224;
  int embedding_dim = 0;
  double learning_rate = 1e-4;
  double weight_decay = 1e-4;
  double classifier_dropout = 0.0;
  std::vector<std::string> frozen_components;
  std::string weights_path;  // pretrained weights (named backbones only)

  void validate() const;
};

// Registry of the four large published backbones plus the desk-scale reference
// encoder. Throws ConfigError on unknown names.
BackboneSpec backbone_spec(const std::string& name);
std::vector<std::string> backbone_names();

// Component names of a backbone minus its frozen components.
std::vector<std::string> trainable_inventory(const BackboneSpec& spec);

struct ForwardResult {
  nn::Matrix logits;      // (n_species, n)
  nn::Matrix embeddings;  // (embedding_dim, n), pre-head pooled features
};

// Encoder + classification head with an explicit embedding surface (the
// distillation interface). Single-owner during training.
class ModelBundle {
 public:
  virtual ~ModelBundle() = default;

  virtual const BackboneSpec& spec() const = 0;
  virtual int n_species() const = 0;

  virtual ForwardResult forward(const nn::Batch& images, bool train) = 0;

  // Backpropagates from logit gradients plus an optional extra gradient on
  // the embeddings (both (dim, n)); accumulates into parameter grads.
  virtual void backward(const nn::Matrix& grad_logits,
                        const nn::Matrix* grad_embeddings = nullptr) = 0;

  virtual std::vector<nn::Param*> all_params() = 0;
  std::vector<nn::Param*> trainable_params();

  // FNV-1a over all parameter bytes; used to prove a teacher stayed frozen.
  std::uint64_t param_checksum();

  virtual void save(const std::string& dir, const SpeciesCatalog& catalog) = 0;
};

// Fresh classification head of width n_species; tiny_reference needs no
// external weights, the named backbones require spec.weights_path to exist
// (DependencyError otherwise).
std::unique_ptr<ModelBundle> create_model(const BackboneSpec& spec, int n_species,
                                          std::uint64_t init_seed = 0);

// Reloads a self-describing checkpoint directory (weights blob + spec JSON +
// catalog CSV).
std::unique_ptr<ModelBundle> load_checkpoint(const std::string& dir,
                                             SpeciesCatalog* catalog = nullptr);

}  // namespace canopy
