#include "canopy/image.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "canopy/errors.hpp"

namespace canopy {

void write_png(const RgbImage& image, const std::string& path) {
  if (image.width <= 0 || image.height <= 0 ||
      image.data.size() != static_cast<std::size_t>(image.width) * image.height * 3)
    throw ConfigError("malformed image buffer for " + path);
  cv::Mat rgb(image.height, image.width, CV_8UC3,
              const_cast<std::uint8_t*>(image.data.data()));
  cv::Mat bgr;
  cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
  if (!cv::imwrite(path, bgr)) throw IoError("cannot write PNG: " + path);
}

RgbImage read_png(const std::string& path) {
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) throw IoError("cannot read image: " + path);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  RgbImage img;
  img.width = rgb.cols;
  img.height = rgb.rows;
  img.data.assign(rgb.data, rgb.data + static_cast<std::size_t>(rgb.total()) * 3);
  return img;
}

}  // namespace canopy
