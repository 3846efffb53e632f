#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "canopy/geometry.hpp"

namespace canopy {

constexpr int kDefaultTileSize = 512;

enum class ViewKind { crown_view, close_up };

std::string to_string(ViewKind v);
ViewKind view_from_string(const std::string& s);

// Georeferenced crown footprint with a stable tree identity across dates.
struct CrownPolygon {
  std::string tree_id;
  PolygonGeometry geometry;  // projected CRS, meters
  std::string crs_id;
  std::optional<int> species_label;  // class index in [0, n_species)

  Point centroid() const { return polygon_centroid(geometry); }

  // Throws ValidationError on non-simple geometry, zero area, empty tree_id
  // or a negative species label.
  void validate(std::optional<int> n_species = std::nullopt) const;
};

struct AcquisitionDate {
  std::string date_id;  // ISO-8601
  std::string raster_uri;
};

// Provenance of one extracted tile.
struct TileSource {
  std::string uri;  // orthomosaic path or close-up file path
  long long col_off = 0;
  long long row_off = 0;
  int width = 0;
  int height = 0;
  std::string anchor = "centroid";  // window centering rule used at extraction
};

// Manifest record for one 512x512 masked tile of one tree on one date.
// The pixels live in a PNG referenced by image_path.
struct TileSample {
  std::string tree_id;
  std::string date_id;
  ViewKind view = ViewKind::crown_view;
  std::string image_path;
  double mask_fraction = 0.0;
  std::optional<int> species_label;
  TileSource source;

  void validate() const;
};

struct SpeciesEntry {
  int class_index = 0;
  std::string scientific_name;
  long long train_count = 0;
  long long val_count = 0;
  long long test_count = 0;
};

// Ordered species list; class indices dense from 0, assigned by descending
// train_count with lexicographic name tiebreak.
struct SpeciesCatalog {
  std::vector<SpeciesEntry> species;

  int n_species() const { return static_cast<int>(species.size()); }
  void validate() const;
};

enum class Split { train, val, test };

std::string to_string(Split s);
Split split_from_string(const std::string& s);

struct SplitAssignment {
  std::map<std::string, Split> by_tree;
  std::uint64_t seed = 0;
  double r_train = 0.7, r_val = 0.15, r_test = 0.15;
};

// Per-sample class-probability vector, the unit of soft voting.
struct PredictionRecord {
  std::string tree_id;
  std::string date_id;
  ViewKind view = ViewKind::crown_view;
  std::vector<double> probs;  // non-negative, sums to 1 within 1e-6
  std::optional<int> true_label;

  void validate() const;
};

enum class EvalMode { individual_image, soft_voting };

std::string to_string(EvalMode m);
EvalMode eval_mode_from_string(const std::string& s);

struct PerSpeciesF1 {
  int class_index = 0;
  double f1 = 0.0;       // NaN when test_count == 0 (undefined)
  long long train_count = 0;
  long long test_count = 0;
};

struct MetricsReport {
  std::map<int, double> top_k;  // k in {1,3,5}
  double f1_macro = 0.0, f1_micro = 0.0, f1_weighted = 0.0;
  std::vector<PerSpeciesF1> per_species;
  EvalMode mode = EvalMode::individual_image;
  ViewKind view = ViewKind::crown_view;
  int n_records = 0;

  void validate() const;  // ranges and top-k monotonicity
};

// ---- Manifest I/O (newline-delimited JSON, one record per line) ----

void write_manifest(const std::vector<TileSample>& samples, const std::string& path);
std::vector<TileSample> read_manifest(const std::string& path);

// Cross-record rules: unique (tree_id, date_id, view), one species_label per
// tree. write_manifest/read_manifest apply this on top of per-record checks.
void validate_manifest(const std::vector<TileSample>& samples);

// ---- Catalog I/O (CSV with header) ----

void write_catalog(const SpeciesCatalog& catalog, const std::string& path);
SpeciesCatalog read_catalog(const std::string& path);

// ---- Prediction export (newline-delimited JSON) ----

void write_predictions(const std::vector<PredictionRecord>& records, const std::string& path);
std::vector<PredictionRecord> read_predictions(const std::string& path);

}  // namespace canopy
