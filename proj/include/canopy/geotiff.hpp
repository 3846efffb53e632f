#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace canopy {

// Affine map pixel -> CRS coordinates:
//   x = c + a*col + b*row
//   y = f + d*col + e*row
// North-up rasters have b = d = 0, e < 0.
struct AffineTransform {
  double a = 1.0, b = 0.0, c = 0.0;
  double d = 0.0, e = -1.0, f = 0.0;

  // Pixel (col,row) indices map CRS coords through the pixel's upper-left
  // corner; pass col+0.5/row+0.5 for pixel centers.
  void pixel_to_world(double col, double row, double& x, double& y) const {
    x = c + a * col + b * row;
    y = f + d * col + e * row;
  }

  // Inverse map; throws NumericError on a singular transform.
  void world_to_pixel(double x, double y, double& col, double& row) const;
};

// In-memory 8-bit multiband raster with georeferencing. Band-interleaved by
// pixel: data[(row*width + col)*bands + band].
struct GeoRaster {
  int width = 0;
  int height = 0;
  int bands = 0;
  AffineTransform transform;
  std::string crs_id;  // e.g. "EPSG:32617"
  std::vector<std::uint8_t> data;

  std::uint8_t at(int row, int col, int band) const {
    return data[(static_cast<std::size_t>(row) * width + col) * bands + band];
  }
  std::uint8_t& at(int row, int col, int band) {
    return data[(static_cast<std::size_t>(row) * width + col) * bands + band];
  }
};

// Reads a baseline GeoTIFF: little- or big-endian, 8-bit samples, chunky
// planar layout, uncompressed, strip- or tile-organized, with
// ModelPixelScale+ModelTiepoint (or ModelTransformation) geo tags and the
// projected-CRS geokey. Compressed TIFFs are rejected with FormatError.
GeoRaster read_geotiff(const std::string& path);

// Writes an uncompressed strip-organized little-endian GeoTIFF.
void write_geotiff(const GeoRaster& raster, const std::string& path);

}  // namespace canopy
