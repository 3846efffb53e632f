#pragma once

#include <array>
#include <vector>

#include "canopy/image.hpp"
#include "canopy/rng.hpp"

namespace canopy {

// Geometric training augmentations; no color/photometric transforms.
struct AugmentConfig {
  double crop_scale_min = 0.7;  // area fraction
  double crop_scale_max = 1.0;
  double aspect_min = 3.0 / 4.0;
  double aspect_max = 4.0 / 3.0;
  double rotation_max_deg = 30.0;
  double hflip_prob = 0.5;
  int target_size = 224;
  std::array<double, 3> normalize_mean = {0.485, 0.456, 0.406};
  std::array<double, 3> normalize_std = {0.229, 0.224, 0.225};

  void validate() const;
};

// target_size x target_size x 3 float image, channel-interleaved (HWC).
struct FloatImage {
  int size = 0;
  std::vector<float> data;  // size*size*3

  float* pixel(int row, int col) {
    return &data[(static_cast<std::size_t>(row) * size + col) * 3];
  }
  const float* pixel(int row, int col) const {
    return &data[(static_cast<std::size_t>(row) * size + col) * 3];
  }
};

// Random resized crop (area in scale range, aspect in [3/4,4/3], bicubic)
// -> rotation uniform(-max,+max) with black fill -> horizontal flip.
// Output values in [0,1], not yet normalized. The rng stream is the only
// source of randomness. A degenerate scale range (1.0, 1.0) takes the pure
// resize path and draws nothing from rng.
FloatImage augment_train(const RgbImage& image, const AugmentConfig& config, Rng& rng);

// Deterministic bicubic resize to target_size, scale to [0,1], then
// per-channel (x - mean) / std.
FloatImage preprocess_eval(const RgbImage& image, const AugmentConfig& config);

// Per-channel normalization / inverse, shared by both paths.
void normalize_inplace(FloatImage& image, const AugmentConfig& config);
void denormalize_inplace(FloatImage& image, const AugmentConfig& config);

// Deterministic bicubic resize to target_size with values in [0,1].
FloatImage resize_to_float(const RgbImage& image, int target_size);

}  // namespace canopy
