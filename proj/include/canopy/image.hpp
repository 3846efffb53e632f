#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace canopy {

// Interleaved 8-bit RGB image, row-major.
struct RgbImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // size = width*height*3

  static RgbImage black(int width, int height) {
    RgbImage img;
    img.width = width;
    img.height = height;
    img.data.assign(static_cast<std::size_t>(width) * height * 3, 0);
    return img;
  }

  std::uint8_t* pixel(int row, int col) {
    return &data[(static_cast<std::size_t>(row) * width + col) * 3];
  }
  const std::uint8_t* pixel(int row, int col) const {
    return &data[(static_cast<std::size_t>(row) * width + col) * 3];
  }
};

void write_png(const RgbImage& image, const std::string& path);
RgbImage read_png(const std::string& path);

}  // namespace canopy
