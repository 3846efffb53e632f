#pragma once

#include <memory>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "canopy/rng.hpp"

namespace canopy::nn {

using Matrix = Eigen::MatrixXf;

// Batch of feature maps: n samples of c x h x w, sample-major, CHW within a
// sample.
struct Batch {
  int n = 0, c = 0, h = 0, w = 0;
  std::vector<float> data;

  static Batch zeros(int n, int c, int h, int w) {
    Batch b{n, c, h, w, {}};
    b.data.assign(static_cast<std::size_t>(n) * c * h * w, 0.0f);
    return b;
  }
  std::size_t sample_stride() const { return static_cast<std::size_t>(c) * h * w; }
  float* sample(int i) { return data.data() + sample_stride() * i; }
  const float* sample(int i) const { return data.data() + sample_stride() * i; }
};

struct Param {
  std::string name;
  Matrix value;
  Matrix grad;
  bool trainable = true;

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

class Layer {
 public:
  virtual ~Layer() = default;
  virtual Batch forward(const Batch& in, bool train) = 0;
  virtual Batch backward(const Batch& grad_out) = 0;
  virtual std::vector<Param*> params() { return {}; }
};

// 3x3 convolution, stride 1, zero padding 1 (shape preserving). im2col +
// GEMM on both passes.
class Conv3x3 : public Layer {
 public:
  Conv3x3(std::string name, int in_channels, int out_channels, Rng& init_rng);
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  int in_c_, out_c_;
  Param weight_;  // (out_c, in_c*9)
  Param bias_;    // (out_c, 1)
  Batch cached_in_;
};

class ReLU : public Layer {
 public:
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;

 private:
  Batch cached_in_;
};

// 2x2 average pooling, stride 2.
class AvgPool2 : public Layer {
 public:
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// Collapses each channel to its spatial mean; output h = w = 1.
class GlobalAvgPool : public Layer {
 public:
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;

 private:
  int in_h_ = 0, in_w_ = 0;
};

// Fully connected layer on 1x1 feature maps (c -> out features).
class Linear : public Layer {
 public:
  Linear(std::string name, int in_features, int out_features, Rng& init_rng);
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;
  std::vector<Param*> params() override { return {&weight_, &bias_}; }

 private:
  int in_f_, out_f_;
  Param weight_;  // (out, in)
  Param bias_;    // (out, 1)
  Batch cached_in_;
};

// Inverted dropout on 1x1 feature maps; identity in eval mode.
class Dropout : public Layer {
 public:
  Dropout(double p, std::uint64_t seed) : p_(p), rng_(seed) {}
  Batch forward(const Batch& in, bool train) override;
  Batch backward(const Batch& grad_out) override;

 private:
  double p_;
  Rng rng_;
  std::vector<float> mask_;
};

class Sequential {
 public:
  void add(std::unique_ptr<Layer> layer) { layers_.push_back(std::move(layer)); }
  Batch forward(const Batch& in, bool train);
  Batch backward(const Batch& grad_out);
  std::vector<Param*> params();

 private:
  std::vector<std::unique_ptr<Layer>> layers_;
};

// (n_features, n) matrix view of a batch of 1x1 feature maps and back.
Matrix batch_to_matrix(const Batch& b);
Batch matrix_to_batch(const Matrix& m);

struct SoftmaxCeResult {
  double loss = 0.0;          // mean over the batch
  Matrix grad_logits;         // d loss / d logits, same shape as logits
  Matrix probs;               // softmax rows-per-class, columns-per-sample
};

// Numerically stable softmax cross-entropy; logits are (n_classes, n),
// labels one per column.
SoftmaxCeResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// Decoupled weight decay Adam.
class AdamW {
 public:
  AdamW(std::vector<Param*> params, double lr, double weight_decay,
        double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
  void zero_grad();
  void step();

 private:
  std::vector<Param*> params_;
  std::vector<Matrix> m_, v_;
  double lr_, wd_, beta1_, beta2_, eps_;
  long step_count_ = 0;
};

}  // namespace canopy::nn
