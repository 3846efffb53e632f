#include "canopy/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"
#include "canopy/image.hpp"
#include "canopy/rng.hpp"

namespace canopy {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Color {
  double r, g, b;
};

Color species_color(int s, int n_species) {
  double h = static_cast<double>(s) / std::max(1, n_species);  // [0,1)
  double x = 1.0 - std::abs(std::fmod(h * 6.0, 2.0) - 1.0);
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h * 6.0) % 6) {
    case 0: r = 1; g = x; break;
    case 1: r = x; g = 1; break;
    case 2: g = 1; b = x; break;
    case 3: g = x; b = 1; break;
    case 4: r = x; b = 1; break;
    default: r = 1; b = x; break;
  }
  return {0.25 + 0.75 * r, 0.25 + 0.75 * g, 0.25 + 0.75 * b};
}

std::uint8_t clamp8(double v) {
  return static_cast<std::uint8_t>(std::clamp(v, 0.0, 255.0));
}

}  // namespace

SyntheticScene generate_scene(const std::string& out_dir,
                              const SyntheticSceneOptions& opt) {
  if (opt.n_species < 2) throw ConfigError("synthetic scene needs >= 2 species");
  fs::create_directories(fs::path(out_dir) / "rasters");
  fs::create_directories(fs::path(out_dir) / "closeups");

  const int per_species = opt.trees_per_species + opt.unlabeled_per_species;
  const int total = opt.n_species * per_species;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(total))));
  const int rows = (total + cols - 1) / cols;
  const double spacing_x = static_cast<double>(opt.raster_size) / (cols + 1);
  const double spacing_y = static_cast<double>(opt.raster_size) / (rows + 1);
  const double radius = 0.32 * std::min(spacing_x, spacing_y);

  AffineTransform transform;
  transform.a = opt.gsd;
  transform.e = -opt.gsd;
  transform.c = 500000.0;
  transform.f = 4000000.0;
  const std::string crs = "EPSG:32617";

  struct Tree {
    std::string id;
    int species;
    bool labeled;
    double px, py;  // pixel center
  };
  std::vector<Tree> trees;
  for (int s = 0; s < opt.n_species; ++s) {
    for (int i = 0; i < per_species; ++i) {
      int idx = s * per_species + i;
      char id[32];
      std::snprintf(id, sizeof(id), "tree_%02d_%02d", s, i);
      Tree t;
      t.id = id;
      t.species = s;
      t.labeled = i < opt.trees_per_species;
      t.px = spacing_x * (idx % cols + 1);
      t.py = spacing_y * (idx / cols + 1);
      trees.push_back(t);
    }
  }

  SyntheticScene scene;
  for (int s = 0; s < opt.n_species; ++s) {
    char name[32];
    std::snprintf(name, sizeof(name), "species_%02d", s);
    scene.species_names.push_back(name);
  }

  // Rasters, one per date, with mild per-date brightness drift.
  Rng rng(opt.seed);
  for (int d = 0; d < opt.n_dates; ++d) {
    GeoRaster raster;
    raster.width = opt.raster_size;
    raster.height = opt.raster_size;
    raster.bands = 3;
    raster.transform = transform;
    raster.crs_id = crs;
    raster.data.assign(static_cast<std::size_t>(opt.raster_size) * opt.raster_size * 3, 0);
    Rng date_rng = rng.split(static_cast<std::uint64_t>(d) + 100);
    double phenology = 0.75 + 0.25 * std::cos(d * 1.1);
    for (int y = 0; y < raster.height; ++y)
      for (int x = 0; x < raster.width; ++x) {
        double bg = 18.0 + 8.0 * date_rng.next_double();
        for (int b = 0; b < 3; ++b) raster.at(y, x, b) = clamp8(bg);
      }
    for (const Tree& t : trees) {
      Color c = species_color(t.species, opt.n_species);
      int x0 = std::max(0, static_cast<int>(t.px - radius) - 1);
      int x1 = std::min(raster.width - 1, static_cast<int>(t.px + radius) + 1);
      int y0 = std::max(0, static_cast<int>(t.py - radius) - 1);
      int y1 = std::min(raster.height - 1, static_cast<int>(t.py + radius) + 1);
      for (int y = y0; y <= y1; ++y)
        for (int x = x0; x <= x1; ++x) {
          double dist = std::hypot(x + 0.5 - t.px, y + 0.5 - t.py);
          if (dist > radius) continue;
          double texture = 0.8 + 0.4 * date_rng.next_double();
          raster.at(y, x, 0) = clamp8(255.0 * c.r * phenology * texture);
          raster.at(y, x, 1) = clamp8(255.0 * c.g * phenology * texture);
          raster.at(y, x, 2) = clamp8(255.0 * c.b * phenology * texture);
        }
    }
    char date_id[16];
    std::snprintf(date_id, sizeof(date_id), "2024-%02d-15", d + 1);
    std::string path = (fs::path(out_dir) / "rasters" / (std::string(date_id) + ".tif")).string();
    write_geotiff(raster, path);
    scene.dates.push_back({date_id, path});
  }

  // Crown polygons: octagons in world coordinates.
  json features = json::array();
  for (const Tree& t : trees) {
    json coords = json::array();
    json ring = json::array();
    for (int k = 0; k < 8; ++k) {
      double ang = 2.0 * M_PI * k / 8.0 + M_PI / 8.0;
      double px = t.px + radius * 0.95 * std::cos(ang);
      double py = t.py + radius * 0.95 * std::sin(ang);
      double wx = 0, wy = 0;
      transform.pixel_to_world(px, py, wx, wy);
      ring.push_back({wx, wy});
    }
    ring.push_back(ring.front());
    coords.push_back(ring);
    json props = {{"tree_id", t.id}};
    if (t.labeled) {
      props["species"] = scene.species_names[static_cast<std::size_t>(t.species)];
      props["species_label"] = t.species;
    }
    features.push_back({{"type", "Feature"},
                        {"properties", props},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", coords}}}});
  }
  json fc = {{"type", "FeatureCollection"},
             {"crs", {{"type", "name"}, {"properties", {{"name", crs}}}}},
             {"features", features}};
  scene.polygons_path = (fs::path(out_dir) / "polygons.geojson").string();
  {
    std::ofstream out(scene.polygons_path);
    if (!out) throw IoError("cannot write " + scene.polygons_path);
    out << fc.dump(2) << '\n';
  }

  // Close-up photos: fine-grained species texture on full frame.
  std::vector<TileSample> closeups;
  for (const Tree& t : trees) {
    Color c = species_color(t.species, opt.n_species);
    Rng tex = rng.split(Rng::mix(std::hash<std::string>{}(t.id)));
    RgbImage img = RgbImage::black(opt.closeup_size, opt.closeup_size);
    for (int y = 0; y < img.height; ++y)
      for (int x = 0; x < img.width; ++x) {
        double vein = 0.65 + 0.35 * std::sin(0.35 * x + 0.2 * y + t.species);
        double noise = 0.85 + 0.3 * tex.next_double();
        std::uint8_t* px = img.pixel(y, x);
        px[0] = clamp8(255.0 * c.r * vein * noise);
        px[1] = clamp8(255.0 * c.g * vein * noise);
        px[2] = clamp8(255.0 * c.b * vein * noise);
      }
    std::string rel = "closeups/" + t.id + ".png";
    write_png(img, (fs::path(out_dir) / rel).string());

    TileSample s;
    s.tree_id = t.id;
    s.date_id = scene.dates.front().date_id;
    s.view = ViewKind::close_up;
    s.image_path = rel;
    s.mask_fraction = 1.0;
    if (t.labeled) s.species_label = t.species;
    s.source.uri = rel;
    s.source.width = opt.closeup_size;
    s.source.height = opt.closeup_size;
    s.source.anchor = "full_frame";
    closeups.push_back(std::move(s));
  }
  scene.closeups_path = (fs::path(out_dir) / "closeups.ndjson").string();
  write_manifest(closeups, scene.closeups_path);
  return scene;
}

}  // namespace canopy
