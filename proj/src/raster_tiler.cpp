#include "canopy/raster_tiler.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"

namespace canopy {

namespace fs = std::filesystem;
using nlohmann::json;

RasterWindow compute_window(const CrownPolygon& polygon,
                            const AffineTransform& raster_transform, int tile_size,
                            const std::string& raster_crs) {
  if (tile_size <= 0 || tile_size % 2 != 0)
    throw ConfigError("tile_size must be positive and even, got " +
                      std::to_string(tile_size));
  if (!raster_crs.empty() && !polygon.crs_id.empty() && raster_crs != polygon.crs_id)
    throw ConfigError("CRS mismatch: polygon " + polygon.tree_id + " is " +
                      polygon.crs_id + ", raster is " + raster_crs);

  Point c = polygon.centroid();
  double col_f = 0.0, row_f = 0.0;
  raster_transform.world_to_pixel(c.x, c.y, col_f, row_f);

  RasterWindow w;
  w.width = tile_size;
  w.height = tile_size;
  w.col_off = round_half_away(col_f) - tile_size / 2;
  w.row_off = round_half_away(row_f) - tile_size / 2;
  w.transform = raster_transform;
  w.transform.c = raster_transform.c + raster_transform.a * static_cast<double>(w.col_off) +
                  raster_transform.b * static_cast<double>(w.row_off);
  w.transform.f = raster_transform.f + raster_transform.d * static_cast<double>(w.col_off) +
                  raster_transform.e * static_cast<double>(w.row_off);
  return w;
}

RgbImage read_window(const GeoRaster& raster, const RasterWindow& window) {
  if (raster.bands < 3)
    throw FormatError("raster has " + std::to_string(raster.bands) + " bands, need >= 3");
  RgbImage out = RgbImage::black(window.width, window.height);
  for (int r = 0; r < window.height; ++r) {
    long long src_row = window.row_off + r;
    if (src_row < 0 || src_row >= raster.height) continue;
    for (int col = 0; col < window.width; ++col) {
      long long src_col = window.col_off + col;
      if (src_col < 0 || src_col >= raster.width) continue;
      std::uint8_t* px = out.pixel(r, col);
      px[0] = raster.at(static_cast<int>(src_row), static_cast<int>(src_col), 0);
      px[1] = raster.at(static_cast<int>(src_row), static_cast<int>(src_col), 1);
      px[2] = raster.at(static_cast<int>(src_row), static_cast<int>(src_col), 2);
    }
  }
  return out;
}

MaskResult rasterize_and_mask(const RgbImage& image, const CrownPolygon& polygon,
                              const RasterWindow& window) {
  if (image.width != window.width || image.height != window.height)
    throw ConfigError("image dimensions do not match window");

  MaskResult result;
  result.image = image;
  long long inside = 0;
  for (int r = 0; r < window.height; ++r) {
    for (int col = 0; col < window.width; ++col) {
      double x = 0.0, y = 0.0;
      window.transform.pixel_to_world(col + 0.5, r + 0.5, x, y);
      if (point_in_polygon(polygon.geometry, {x, y})) {
        ++inside;
      } else {
        std::uint8_t* px = result.image.pixel(r, col);
        px[0] = px[1] = px[2] = 0;
      }
    }
  }
  if (inside == 0)
    throw GeometryError("polygon " + polygon.tree_id +
                        " covers no pixel center in the window");
  result.mask_fraction = static_cast<double>(inside) /
                         (static_cast<double>(window.width) * window.height);
  return result;
}

namespace {

bool window_intersects(const RasterWindow& w, const GeoRaster& raster) {
  return w.col_off < raster.width && w.col_off + w.width > 0 && w.row_off < raster.height &&
         w.row_off + w.height > 0;
}

}  // namespace

std::vector<TileResult> build_temporal_series(const CrownPolygon& polygon,
                                              const std::vector<AcquisitionDate>& dates,
                                              int tile_size, const WarnFn& warn) {
  polygon.validate();
  auto emit_warning = [&](const std::string& msg) {
    if (warn) warn(msg);
  };

  std::vector<TileResult> series;
  bool window_fixed = false;
  RasterWindow window;
  for (const AcquisitionDate& date : dates) {
    GeoRaster raster;
    try {
      raster = read_geotiff(date.raster_uri);
    } catch (const Error& e) {
      emit_warning("skipping date " + date.date_id + " for tree " + polygon.tree_id + ": " +
                   e.what());
      continue;
    }
    if (!window_fixed) {
      window = compute_window(polygon, raster.transform, tile_size, raster.crs_id);
      window_fixed = true;
    }
    if (!window_intersects(window, raster)) {
      emit_warning("skipping date " + date.date_id + " for tree " + polygon.tree_id +
                   ": raster does not cover the crown window");
      continue;
    }
    MaskResult masked = rasterize_and_mask(read_window(raster, window), polygon, window);

    TileResult t;
    t.image = std::move(masked.image);
    t.sample.tree_id = polygon.tree_id;
    t.sample.date_id = date.date_id;
    t.sample.view = ViewKind::crown_view;
    t.sample.mask_fraction = masked.mask_fraction;
    t.sample.species_label = polygon.species_label;
    t.sample.source.uri = date.raster_uri;
    t.sample.source.col_off = window.col_off;
    t.sample.source.row_off = window.row_off;
    t.sample.source.width = window.width;
    t.sample.source.height = window.height;
    t.sample.source.anchor = "centroid";
    series.push_back(std::move(t));
  }
  if (series.empty())
    throw GeometryError("tree " + polygon.tree_id + ": no usable acquisition date");
  return series;
}

TilingSummary tile_dataset(const std::vector<CrownPolygon>& polygons,
                           const std::vector<AcquisitionDate>& dates, int tile_size,
                           const std::string& out_dir) {
  fs::create_directories(fs::path(out_dir) / "tiles");
  TilingSummary summary;
  std::vector<TileSample> manifest;
  for (const CrownPolygon& polygon : polygons) {
    std::vector<TileResult> series;
    try {
      series = build_temporal_series(polygon, dates, tile_size, [&](const std::string& msg) {
        summary.warnings.push_back(msg);
      });
    } catch (const GeometryError& e) {
      summary.warnings.push_back(e.what());
      ++summary.polygons_skipped;
      continue;
    }
    for (TileResult& t : series) {
      std::string rel = "tiles/" + t.sample.tree_id + "_" + t.sample.date_id + "_crown.png";
      std::string abs = (fs::path(out_dir) / rel).string();
      write_png(t.image, abs);
      t.sample.image_path = rel;
      manifest.push_back(std::move(t.sample));
      ++summary.tiles_written;
    }
    ++summary.polygons_processed;
  }
  write_manifest(manifest, (fs::path(out_dir) / "manifest.ndjson").string());
  return summary;
}

// ---- GeoJSON input ----

namespace {

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open polygon file: " + path);
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError(path + ": malformed GeoJSON");
  return j;
}

Ring parse_ring(const json& coords) {
  Ring ring;
  for (const json& pt : coords) {
    if (!pt.is_array() || pt.size() < 2) throw ParseError("bad GeoJSON coordinate");
    ring.push_back({pt[0].get<double>(), pt[1].get<double>()});
  }
  // GeoJSON rings repeat the first vertex at the end; our rings are implicit.
  if (ring.size() >= 2 && ring.front().x == ring.back().x && ring.front().y == ring.back().y)
    ring.pop_back();
  return ring;
}

}  // namespace

std::vector<CrownPolygon> read_polygons_geojson(const std::string& path) {
  json j = load_json_file(path);
  if (j.value("type", "") != "FeatureCollection")
    throw ParseError(path + ": expected a GeoJSON FeatureCollection");
  std::string crs_id;
  if (j.contains("crs") && j["crs"].contains("properties"))
    crs_id = j["crs"]["properties"].value("name", "");

  std::vector<CrownPolygon> polygons;
  for (const json& feat : j.value("features", json::array())) {
    CrownPolygon p;
    const json& props = feat.value("properties", json::object());
    p.tree_id = props.value("tree_id", "");
    if (props.contains("species_label") && !props["species_label"].is_null())
      p.species_label = props["species_label"].get<int>();
    p.crs_id = crs_id;
    const json& geom = feat.value("geometry", json::object());
    if (geom.value("type", "") != "Polygon")
      throw ParseError(path + ": feature " + p.tree_id + " is not a Polygon");
    for (const json& ring : geom.value("coordinates", json::array()))
      p.geometry.rings.push_back(parse_ring(ring));
    p.validate();
    polygons.push_back(std::move(p));
  }
  return polygons;
}

std::map<std::string, std::string> read_species_names_geojson(const std::string& path) {
  json j = load_json_file(path);
  std::map<std::string, std::string> names;
  for (const json& feat : j.value("features", json::array())) {
    const json& props = feat.value("properties", json::object());
    std::string tree_id = props.value("tree_id", "");
    if (props.contains("species") && !props["species"].is_null())
      names[tree_id] = props["species"].get<std::string>();
  }
  return names;
}

}  // namespace canopy
