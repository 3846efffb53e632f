#pragma once

// Shared helpers for building tiny on-disk datasets the learning-side tests
// can train on in seconds.

#include <filesystem>
#include <string>
#include <vector>

#include "canopy/core_types.hpp"
#include "canopy/image.hpp"
#include "canopy/rng.hpp"

namespace canopy::testing {

struct TinyDatasetOptions {
  int n_species = 3;
  int trees_per_species = 6;
  int n_dates = 2;
  int image_size = 32;
  bool with_closeups = false;
  std::uint64_t seed = 11;
};

// Species are separated by color; per-sample noise keeps the task non-trivial
// but learnable by a small conv net.
inline RgbImage class_image(int species, int n_species, int size, Rng& rng) {
  RgbImage img = RgbImage::black(size, size);
  double hue = static_cast<double>(species) / n_species;
  double base_r = 60 + 180 * hue;
  double base_g = 200 - 160 * hue;
  double base_b = 80 + 120 * (1.0 - hue);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      double n = 0.8 + 0.4 * rng.next_double();
      std::uint8_t* px = img.pixel(y, x);
      px[0] = static_cast<std::uint8_t>(std::min(255.0, base_r * n));
      px[1] = static_cast<std::uint8_t>(std::min(255.0, base_g * n));
      px[2] = static_cast<std::uint8_t>(std::min(255.0, base_b * n));
    }
  return img;
}

// Writes PNGs under dir and returns a valid manifest; tree ids are
// "s<species>_t<index>", dates "2024-0D-01".
inline std::vector<TileSample> make_tiny_dataset(const std::string& dir,
                                                 const TinyDatasetOptions& opt) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  Rng rng(opt.seed);
  std::vector<TileSample> samples;
  for (int sp = 0; sp < opt.n_species; ++sp) {
    for (int t = 0; t < opt.trees_per_species; ++t) {
      std::string tree_id = "s" + std::to_string(sp) + "_t" + std::to_string(t);
      for (int d = 0; d < opt.n_dates; ++d) {
        Rng img_rng = rng.split(Rng::mix((sp * 100 + t) * 32 + d));
        RgbImage img = class_image(sp, opt.n_species, opt.image_size, img_rng);
        std::string rel = tree_id + "_d" + std::to_string(d) + ".png";
        write_png(img, (fs::path(dir) / rel).string());

        TileSample s;
        s.tree_id = tree_id;
        char date[16];
        std::snprintf(date, sizeof(date), "2024-%02d-01", d + 1);
        s.date_id = date;
        s.view = ViewKind::crown_view;
        s.image_path = rel;
        s.mask_fraction = 0.8;
        s.species_label = sp;
        s.source.uri = rel;
        s.source.width = opt.image_size;
        s.source.height = opt.image_size;
        samples.push_back(std::move(s));
      }
      if (opt.with_closeups) {
        Rng img_rng = rng.split(Rng::mix((sp * 100 + t) * 32 + 31));
        RgbImage img = class_image(sp, opt.n_species, opt.image_size, img_rng);
        std::string rel = tree_id + "_closeup.png";
        write_png(img, (fs::path(dir) / rel).string());

        TileSample s;
        s.tree_id = tree_id;
        s.date_id = "2024-01-01";
        s.view = ViewKind::close_up;
        s.image_path = rel;
        s.mask_fraction = 1.0;
        s.species_label = sp;
        s.source.uri = rel;
        s.source.width = opt.image_size;
        s.source.height = opt.image_size;
        samples.push_back(std::move(s));
      }
    }
  }
  return samples;
}

inline SpeciesCatalog balanced_catalog(int n_species, long long train_count) {
  SpeciesCatalog catalog;
  for (int i = 0; i < n_species; ++i) {
    SpeciesEntry e;
    e.class_index = i;
    e.scientific_name = "species_" + std::to_string(i);
    e.train_count = train_count;
    catalog.species.push_back(e);
  }
  return catalog;
}

inline std::string fresh_temp_dir(const std::string& tag) {
  namespace fs = std::filesystem;
  fs::path p = fs::temp_directory_path() / ("canopy_" + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p.string();
}

}  // namespace canopy::testing
