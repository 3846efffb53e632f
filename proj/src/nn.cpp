#include "canopy/nn.hpp"

#include <cmath>

#include "canopy/errors.hpp"

namespace canopy::nn {

namespace {

Matrix he_init(int rows, int cols, int fan_in, Rng& rng) {
  Matrix m(rows, cols);
  double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
  for (int j = 0; j < cols; ++j)
    for (int i = 0; i < rows; ++i)
      m(i, j) = static_cast<float>(rng.next_gaussian() * scale);
  return m;
}

// (in_c*9, h*w) column matrix for a 3x3/pad-1 convolution.
void im2col(const float* src, int c, int h, int w, Matrix& cols) {
  cols.resize(c * 9, h * w);
  for (int ch = 0; ch < c; ++ch) {
    const float* plane = src + static_cast<std::size_t>(ch) * h * w;
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        int row = ch * 9 + (ky + 1) * 3 + (kx + 1);
        for (int y = 0; y < h; ++y) {
          int sy = y + ky;
          for (int x = 0; x < w; ++x) {
            int sx = x + kx;
            float v = 0.0f;
            if (sy >= 0 && sy < h && sx >= 0 && sx < w) v = plane[sy * w + sx];
            cols(row, y * w + x) = v;
          }
        }
      }
    }
  }
}

void col2im(const Matrix& cols, int c, int h, int w, float* dst) {
  for (int ch = 0; ch < c; ++ch) {
    float* plane = dst + static_cast<std::size_t>(ch) * h * w;
    for (int ky = -1; ky <= 1; ++ky) {
      for (int kx = -1; kx <= 1; ++kx) {
        int row = ch * 9 + (ky + 1) * 3 + (kx + 1);
        for (int y = 0; y < h; ++y) {
          int sy = y + ky;
          if (sy < 0 || sy >= h) continue;
          for (int x = 0; x < w; ++x) {
            int sx = x + kx;
            if (sx < 0 || sx >= w) continue;
            plane[sy * w + sx] += cols(row, y * w + x);
          }
        }
      }
    }
  }
}

}  // namespace

Conv3x3::Conv3x3(std::string name, int in_channels, int out_channels, Rng& init_rng)
    : in_c_(in_channels), out_c_(out_channels) {
  weight_.name = name + ".weight";
  weight_.value = he_init(out_c_, in_c_ * 9, in_c_ * 9, init_rng);
  bias_.name = name + ".bias";
  bias_.value = Matrix::Zero(out_c_, 1);
  weight_.zero_grad();
  bias_.zero_grad();
}

Batch Conv3x3::forward(const Batch& in, bool /*train*/) {
  if (in.c != in_c_) throw ConfigError("Conv3x3: channel mismatch");
  cached_in_ = in;
  Batch out = Batch::zeros(in.n, out_c_, in.h, in.w);
  Matrix cols;
  for (int i = 0; i < in.n; ++i) {
    im2col(in.sample(i), in.c, in.h, in.w, cols);
    Eigen::Map<Matrix> out_map(out.sample(i), in.h * in.w, out_c_);
    // out plane is row-major CHW: out[ch][pixel]; build as (out_c, hw) then
    // write transposed through the map (Eigen maps are column-major).
    Matrix res = weight_.value * cols;             // (out_c, hw)
    res.colwise() += bias_.value.col(0);
    out_map = res.transpose();
  }
  return out;
}

Batch Conv3x3::backward(const Batch& grad_out) {
  const Batch& in = cached_in_;
  Batch grad_in = Batch::zeros(in.n, in.c, in.h, in.w);
  Matrix cols;
  for (int i = 0; i < in.n; ++i) {
    im2col(in.sample(i), in.c, in.h, in.w, cols);
    Eigen::Map<const Matrix> go_map(grad_out.sample(i), in.h * in.w, out_c_);
    Matrix go = go_map.transpose();  // (out_c, hw)
    weight_.grad.noalias() += go * cols.transpose();
    bias_.grad.col(0) += go.rowwise().sum();
    Matrix dcols = weight_.value.transpose() * go;  // (in_c*9, hw)
    col2im(dcols, in.c, in.h, in.w, grad_in.sample(i));
  }
  return grad_in;
}

Batch ReLU::forward(const Batch& in, bool /*train*/) {
  cached_in_ = in;
  Batch out = in;
  for (float& v : out.data)
    if (v < 0.0f) v = 0.0f;
  return out;
}

Batch ReLU::backward(const Batch& grad_out) {
  Batch grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.data.size(); ++i)
    if (cached_in_.data[i] <= 0.0f) grad_in.data[i] = 0.0f;
  return grad_in;
}

Batch AvgPool2::forward(const Batch& in, bool /*train*/) {
  in_h_ = in.h;
  in_w_ = in.w;
  Batch out = Batch::zeros(in.n, in.c, in.h / 2, in.w / 2);
  for (int i = 0; i < in.n; ++i) {
    const float* src = in.sample(i);
    float* dst = out.sample(i);
    for (int ch = 0; ch < in.c; ++ch) {
      const float* sp = src + static_cast<std::size_t>(ch) * in.h * in.w;
      float* dp = dst + static_cast<std::size_t>(ch) * out.h * out.w;
      for (int y = 0; y < out.h; ++y)
        for (int x = 0; x < out.w; ++x)
          dp[y * out.w + x] = 0.25f * (sp[(2 * y) * in.w + 2 * x] +
                                       sp[(2 * y) * in.w + 2 * x + 1] +
                                       sp[(2 * y + 1) * in.w + 2 * x] +
                                       sp[(2 * y + 1) * in.w + 2 * x + 1]);
    }
  }
  return out;
}

Batch AvgPool2::backward(const Batch& grad_out) {
  Batch grad_in = Batch::zeros(grad_out.n, grad_out.c, in_h_, in_w_);
  for (int i = 0; i < grad_out.n; ++i) {
    const float* src = grad_out.sample(i);
    float* dst = grad_in.sample(i);
    for (int ch = 0; ch < grad_out.c; ++ch) {
      const float* sp = src + static_cast<std::size_t>(ch) * grad_out.h * grad_out.w;
      float* dp = dst + static_cast<std::size_t>(ch) * in_h_ * in_w_;
      for (int y = 0; y < grad_out.h; ++y)
        for (int x = 0; x < grad_out.w; ++x) {
          float g = 0.25f * sp[y * grad_out.w + x];
          dp[(2 * y) * in_w_ + 2 * x] += g;
          dp[(2 * y) * in_w_ + 2 * x + 1] += g;
          dp[(2 * y + 1) * in_w_ + 2 * x] += g;
          dp[(2 * y + 1) * in_w_ + 2 * x + 1] += g;
        }
    }
  }
  return grad_in;
}

Batch GlobalAvgPool::forward(const Batch& in, bool /*train*/) {
  in_h_ = in.h;
  in_w_ = in.w;
  Batch out = Batch::zeros(in.n, in.c, 1, 1);
  const float inv = 1.0f / static_cast<float>(in.h * in.w);
  for (int i = 0; i < in.n; ++i) {
    const float* src = in.sample(i);
    float* dst = out.sample(i);
    for (int ch = 0; ch < in.c; ++ch) {
      const float* sp = src + static_cast<std::size_t>(ch) * in.h * in.w;
      float acc = 0.0f;
      for (int p = 0; p < in.h * in.w; ++p) acc += sp[p];
      dst[ch] = acc * inv;
    }
  }
  return out;
}

Batch GlobalAvgPool::backward(const Batch& grad_out) {
  Batch grad_in = Batch::zeros(grad_out.n, grad_out.c, in_h_, in_w_);
  const float inv = 1.0f / static_cast<float>(in_h_ * in_w_);
  for (int i = 0; i < grad_out.n; ++i) {
    const float* src = grad_out.sample(i);
    float* dst = grad_in.sample(i);
    for (int ch = 0; ch < grad_out.c; ++ch) {
      float g = src[ch] * inv;
      float* dp = dst + static_cast<std::size_t>(ch) * in_h_ * in_w_;
      for (int p = 0; p < in_h_ * in_w_; ++p) dp[p] = g;
    }
  }
  return grad_in;
}

Linear::Linear(std::string name, int in_features, int out_features, Rng& init_rng)
    : in_f_(in_features), out_f_(out_features) {
  weight_.name = name + ".weight";
  weight_.value = he_init(out_f_, in_f_, in_f_, init_rng);
  bias_.name = name + ".bias";
  bias_.value = Matrix::Zero(out_f_, 1);
  weight_.zero_grad();
  bias_.zero_grad();
}

Batch Linear::forward(const Batch& in, bool /*train*/) {
  if (in.c != in_f_ || in.h != 1 || in.w != 1)
    throw ConfigError("Linear: expected 1x1 feature maps of width " + std::to_string(in_f_));
  cached_in_ = in;
  Eigen::Map<const Matrix> x(in.data.data(), in_f_, in.n);
  Matrix y = weight_.value * x;
  y.colwise() += bias_.value.col(0);
  Batch out = Batch::zeros(in.n, out_f_, 1, 1);
  Eigen::Map<Matrix>(out.data.data(), out_f_, in.n) = y;
  return out;
}

Batch Linear::backward(const Batch& grad_out) {
  Eigen::Map<const Matrix> go(grad_out.data.data(), out_f_, grad_out.n);
  Eigen::Map<const Matrix> x(cached_in_.data.data(), in_f_, cached_in_.n);
  weight_.grad.noalias() += go * x.transpose();
  bias_.grad.col(0) += go.rowwise().sum();
  Batch grad_in = Batch::zeros(cached_in_.n, in_f_, 1, 1);
  Eigen::Map<Matrix>(grad_in.data.data(), in_f_, cached_in_.n) =
      weight_.value.transpose() * go;
  return grad_in;
}

Batch Dropout::forward(const Batch& in, bool train) {
  if (!train || p_ <= 0.0) {
    mask_.clear();
    return in;
  }
  Batch out = in;
  mask_.resize(in.data.size());
  const float keep = static_cast<float>(1.0 - p_);
  for (std::size_t i = 0; i < in.data.size(); ++i) {
    mask_[i] = rng_.next_double() < p_ ? 0.0f : 1.0f / keep;
    out.data[i] *= mask_[i];
  }
  return out;
}

Batch Dropout::backward(const Batch& grad_out) {
  if (mask_.empty()) return grad_out;
  Batch grad_in = grad_out;
  for (std::size_t i = 0; i < grad_in.data.size(); ++i) grad_in.data[i] *= mask_[i];
  return grad_in;
}

Batch Sequential::forward(const Batch& in, bool train) {
  Batch x = in;
  for (auto& layer : layers_) x = layer->forward(x, train);
  return x;
}

Batch Sequential::backward(const Batch& grad_out) {
  Batch g = grad_out;
  for (auto it = layers_.rbegin(); it != layers_.rend(); ++it) g = (*it)->backward(g);
  return g;
}

std::vector<Param*> Sequential::params() {
  std::vector<Param*> out;
  for (auto& layer : layers_)
    for (Param* p : layer->params()) out.push_back(p);
  return out;
}

Matrix batch_to_matrix(const Batch& b) {
  if (b.h != 1 || b.w != 1) throw ConfigError("batch_to_matrix: not 1x1 feature maps");
  return Eigen::Map<const Matrix>(b.data.data(), b.c, b.n);
}

Batch matrix_to_batch(const Matrix& m) {
  Batch b = Batch::zeros(static_cast<int>(m.cols()), static_cast<int>(m.rows()), 1, 1);
  Eigen::Map<Matrix>(b.data.data(), m.rows(), m.cols()) = m;
  return b;
}

SoftmaxCeResult softmax_cross_entropy(const Matrix& logits, const std::vector<int>& labels) {
  const int n = static_cast<int>(logits.cols());
  if (static_cast<int>(labels.size()) != n)
    throw ConfigError("softmax_cross_entropy: label count mismatch");
  SoftmaxCeResult r;
  r.probs.resize(logits.rows(), n);
  r.grad_logits.resize(logits.rows(), n);
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    Eigen::VectorXf col = logits.col(j);
    float mx = col.maxCoeff();
    Eigen::VectorXf e = (col.array() - mx).exp();
    float z = e.sum();
    r.probs.col(j) = e / z;
    int y = labels[j];
    if (y < 0 || y >= logits.rows())
      throw ConfigError("softmax_cross_entropy: label out of range");
    total += -std::log(std::max(r.probs(y, j), 1e-30f));
    r.grad_logits.col(j) = r.probs.col(j);
    r.grad_logits(y, j) -= 1.0f;
  }
  r.grad_logits /= static_cast<float>(n);
  r.loss = total / n;
  return r;
}

AdamW::AdamW(std::vector<Param*> params, double lr, double weight_decay, double beta1,
             double beta2, double eps)
    : params_(std::move(params)), lr_(lr), wd_(weight_decay), beta1_(beta1), beta2_(beta2),
      eps_(eps) {
  for (Param* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void AdamW::zero_grad() {
  for (Param* p : params_) p->zero_grad();
}

void AdamW::step() {
  ++step_count_;
  const float b1 = static_cast<float>(beta1_);
  const float b2 = static_cast<float>(beta2_);
  const float correction1 = 1.0f - std::pow(b1, static_cast<float>(step_count_));
  const float correction2 = 1.0f - std::pow(b2, static_cast<float>(step_count_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Param* p = params_[i];
    if (!p->trainable) continue;
    m_[i] = b1 * m_[i] + (1.0f - b1) * p->grad;
    v_[i] = b2 * v_[i] + (1.0f - b2) * p->grad.cwiseProduct(p->grad);
    Matrix m_hat = m_[i] / correction1;
    Matrix v_hat = v_[i] / correction2;
    // Decoupled weight decay: applied directly to the weights, not the
    // gradient estimate.
    p->value -= static_cast<float>(lr_) *
                (m_hat.array() / (v_hat.array().sqrt() + static_cast<float>(eps_)) +
                 static_cast<float>(wd_) * p->value.array())
                    .matrix();
  }
}

}  // namespace canopy::nn
