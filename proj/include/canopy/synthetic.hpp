#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "canopy/core_types.hpp"
#include "canopy/geotiff.hpp"

namespace canopy {

// Desk-scale synthetic scene: a grid of colored "crowns" on a dark
// background, one orthomosaic per date plus one close-up photo per tree.
// Species are color-coded so a small encoder can separate them.
struct SyntheticSceneOptions {
  int n_species = 3;
  int trees_per_species = 8;
  int n_dates = 2;
  int raster_size = 1024;      // pixels, square
  int closeup_size = 256;      // pixels
  double gsd = 0.04;           // meters per pixel
  std::uint64_t seed = 7;
  int unlabeled_per_species = 0;  // extra trees without species labels
};

struct SyntheticScene {
  std::vector<AcquisitionDate> dates;
  std::string polygons_path;   // GeoJSON FeatureCollection
  std::string closeups_path;   // manifest-format NDJSON of close_up samples
  std::vector<std::string> species_names;
};

// Writes rasters/, polygons.geojson and closeups/ under out_dir.
SyntheticScene generate_scene(const std::string& out_dir,
                              const SyntheticSceneOptions& options);

}  // namespace canopy
