#include "canopy/preprocessing.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "canopy/errors.hpp"

namespace canopy {

void AugmentConfig::validate() const {
  if (!(crop_scale_min > 0.0 && crop_scale_min <= crop_scale_max && crop_scale_max <= 1.0))
    throw ConfigError("crop scale range must satisfy 0 < min <= max <= 1");
  if (aspect_min <= 0.0 || aspect_min > aspect_max)
    throw ConfigError("bad aspect ratio range");
  if (rotation_max_deg < 0.0) throw ConfigError("rotation_max_deg must be >= 0");
  if (hflip_prob < 0.0 || hflip_prob > 1.0) throw ConfigError("hflip_prob must be in [0,1]");
  if (target_size <= 0) throw ConfigError("target_size must be positive");
  for (double s : normalize_std)
    if (s <= 0.0) throw ConfigError("normalize_std components must be positive");
}

namespace {

cv::Mat to_mat(const RgbImage& image) {
  if (image.width < 2 || image.height < 2)
    throw ConfigError("input image smaller than 2x2");
  return cv::Mat(image.height, image.width, CV_8UC3,
                 const_cast<std::uint8_t*>(image.data.data()));
}

FloatImage from_mat(const cv::Mat& m) {
  CV_Assert(m.type() == CV_32FC3 && m.isContinuous());
  FloatImage out;
  out.size = m.rows;
  const float* p = m.ptr<float>(0);
  out.data.assign(p, p + static_cast<std::size_t>(m.total()) * 3);
  for (float& v : out.data) v = std::clamp(v, 0.0f, 1.0f);  // bicubic overshoot
  return out;
}

// torchvision-style crop parameter sampling: up to 10 attempts, then a
// center crop at the image's own aspect ratio.
cv::Rect sample_crop(int width, int height, const AugmentConfig& cfg, Rng& rng) {
  const double area = static_cast<double>(width) * height;
  const double log_lo = std::log(cfg.aspect_min);
  const double log_hi = std::log(cfg.aspect_max);
  for (int attempt = 0; attempt < 10; ++attempt) {
    double target_area = area * rng.uniform(cfg.crop_scale_min, cfg.crop_scale_max);
    double ratio = std::exp(rng.uniform(log_lo, log_hi));
    int w = static_cast<int>(std::lround(std::sqrt(target_area * ratio)));
    int h = static_cast<int>(std::lround(std::sqrt(target_area / ratio)));
    if (w > 0 && h > 0 && w <= width && h <= height) {
      int x = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(width - w + 1)));
      int y = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(height - h + 1)));
      return {x, y, w, h};
    }
  }
  int side = std::min(width, height);
  return {(width - side) / 2, (height - side) / 2, side, side};
}

}  // namespace

FloatImage resize_to_float(const RgbImage& image, int target_size) {
  cv::Mat src = to_mat(image);
  cv::Mat f;
  src.convertTo(f, CV_32FC3, 1.0 / 255.0);
  cv::Mat resized;
  cv::resize(f, resized, {target_size, target_size}, 0, 0, cv::INTER_CUBIC);
  return from_mat(resized);
}

FloatImage augment_train(const RgbImage& image, const AugmentConfig& config, Rng& rng) {
  config.validate();
  cv::Mat src = to_mat(image);

  // Crop + bicubic resize. The degenerate (1.0, 1.0) range is the disabled
  // path: full frame, no rng draw.
  cv::Rect crop{0, 0, image.width, image.height};
  if (!(config.crop_scale_min == 1.0 && config.crop_scale_max == 1.0))
    crop = sample_crop(image.width, image.height, config, rng);
  cv::Mat cropped = src(crop);
  cv::Mat f;
  cropped.convertTo(f, CV_32FC3, 1.0 / 255.0);
  cv::Mat resized;
  cv::resize(f, resized, {config.target_size, config.target_size}, 0, 0, cv::INTER_CUBIC);

  // Rotation with black fill keeps non-crown pixels black.
  cv::Mat rotated = resized;
  if (config.rotation_max_deg > 0.0) {
    double angle = rng.uniform(-config.rotation_max_deg, config.rotation_max_deg);
    cv::Point2f center(static_cast<float>(config.target_size) / 2.0f,
                       static_cast<float>(config.target_size) / 2.0f);
    cv::Mat rot = cv::getRotationMatrix2D(center, angle, 1.0);
    cv::warpAffine(resized, rotated, rot, resized.size(), cv::INTER_LINEAR,
                   cv::BORDER_CONSTANT, cv::Scalar(0, 0, 0));
  }

  bool flip = false;
  if (config.hflip_prob > 0.0) flip = rng.next_double() < config.hflip_prob;
  cv::Mat flipped = rotated;
  if (flip) cv::flip(rotated, flipped, 1);

  if (!flipped.isContinuous()) flipped = flipped.clone();
  return from_mat(flipped);
}

FloatImage preprocess_eval(const RgbImage& image, const AugmentConfig& config) {
  config.validate();
  if (image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw FormatError("input is not interleaved RGB");
  FloatImage out = resize_to_float(image, config.target_size);
  normalize_inplace(out, config);
  return out;
}

void normalize_inplace(FloatImage& image, const AugmentConfig& config) {
  for (std::size_t i = 0; i < image.data.size(); i += 3)
    for (int c = 0; c < 3; ++c)
      image.data[i + c] = static_cast<float>(
          (image.data[i + c] - config.normalize_mean[c]) / config.normalize_std[c]);
}

void denormalize_inplace(FloatImage& image, const AugmentConfig& config) {
  for (std::size_t i = 0; i < image.data.size(); i += 3)
    for (int c = 0; c < 3; ++c)
      image.data[i + c] = static_cast<float>(image.data[i + c] * config.normalize_std[c] +
                                             config.normalize_mean[c]);
}

}  // namespace canopy
