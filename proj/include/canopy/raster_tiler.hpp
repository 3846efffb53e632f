#pragma once

#include <functional>
#include <string>
#include <vector>

#include "canopy/core_types.hpp"
#include "canopy/geotiff.hpp"
#include "canopy/image.hpp"

namespace canopy {

// Crown-view orthomosaic GSD is ~0.04 m/px.
struct GsdSpec {
  double ground_sample_distance = 0.04;  // meters per pixel
};

// Square pixel window into a raster; may extend beyond the raster bounds
// (out-of-bounds pixels read as black).
struct RasterWindow {
  long long col_off = 0;
  long long row_off = 0;
  int width = 0;
  int height = 0;
  AffineTransform transform;  // window pixel -> CRS
};

// Window of tile_size x tile_size pixels whose center pixel
// (tile_size/2, tile_size/2) holds the polygon centroid. Pixel snapping is
// round-half-away-from-zero. Throws ConfigError on odd tile_size or CRS
// mismatch (raster_crs vs polygon.crs_id; empty strings skip the check).
RasterWindow compute_window(const CrownPolygon& polygon,
                            const AffineTransform& raster_transform, int tile_size,
                            const std::string& raster_crs = "");

// Copies the window from the raster, black-filling any out-of-bounds region.
// Uses the first three bands; throws FormatError on fewer than 3.
RgbImage read_window(const GeoRaster& raster, const RasterWindow& window);

struct MaskResult {
  RgbImage image;
  double mask_fraction = 0.0;
};

// Zeroes every pixel whose center lies outside the polygon (even-odd rule,
// so hole interiors are masked too). Throws GeometryError when no pixel
// center falls inside the polygon.
MaskResult rasterize_and_mask(const RgbImage& image, const CrownPolygon& polygon,
                              const RasterWindow& window);

struct TileResult {
  TileSample sample;
  RgbImage image;
};

using WarnFn = std::function<void(const std::string&)>;

// One masked crown_view tile per usable date; all dates share the window
// computed from the first usable date's grid. Dates whose raster does not
// intersect the window are skipped through `warn`. Throws GeometryError when
// no date is usable.
std::vector<TileResult> build_temporal_series(const CrownPolygon& polygon,
                                              const std::vector<AcquisitionDate>& dates,
                                              int tile_size, const WarnFn& warn = {});

struct TilingSummary {
  int polygons_processed = 0;
  int polygons_skipped = 0;
  int tiles_written = 0;
  std::vector<std::string> warnings;
};

// Full dataset pass: every polygon x date, PNGs under out_dir/tiles/,
// manifest at out_dir/manifest.ndjson.
TilingSummary tile_dataset(const std::vector<CrownPolygon>& polygons,
                           const std::vector<AcquisitionDate>& dates, int tile_size,
                           const std::string& out_dir);

// GeoJSON FeatureCollection of Polygon features with properties `tree_id`
// and optional `species_label` (int) / `species` (name, resolved upstream).
std::vector<CrownPolygon> read_polygons_geojson(const std::string& path);

// Species names keyed by tree_id, from the same GeoJSON `species` property.
std::map<std::string, std::string> read_species_names_geojson(const std::string& path);

}  // namespace canopy
