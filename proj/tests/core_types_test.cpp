#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "canopy/core_types.hpp"
#include "canopy/errors.hpp"
#include "canopy/rng.hpp"
#include "test_fixtures.hpp"

using namespace canopy;
namespace fs = std::filesystem;

namespace {

TileSample sample(const std::string& tree, const std::string& date,
                  ViewKind view = ViewKind::crown_view, int label = 0) {
  TileSample s;
  s.tree_id = tree;
  s.date_id = date;
  s.view = view;
  s.image_path = "tiles/" + tree + "_" + date + ".png";
  s.mask_fraction = 0.5;
  s.species_label = label;
  s.source.uri = "raster.tif";
  s.source.width = 512;
  s.source.height = 512;
  return s;
}

std::string tmp_file(const std::string& name) {
  return (fs::temp_directory_path() / name).string();
}

bool samples_equal(const TileSample& a, const TileSample& b) {
  return a.tree_id == b.tree_id && a.date_id == b.date_id && a.view == b.view &&
         a.image_path == b.image_path && a.mask_fraction == b.mask_fraction &&
         a.species_label == b.species_label && a.source.uri == b.source.uri &&
         a.source.col_off == b.source.col_off && a.source.row_off == b.source.row_off;
}

}  // namespace

TEST_CASE("enum string round trips") {
  for (ViewKind v : {ViewKind::crown_view, ViewKind::close_up})
    CHECK(view_from_string(to_string(v)) == v);
  for (Split s : {Split::train, Split::val, Split::test})
    CHECK(split_from_string(to_string(s)) == s);
  for (EvalMode m : {EvalMode::individual_image, EvalMode::soft_voting})
    CHECK(eval_mode_from_string(to_string(m)) == m);
  CHECK_THROWS_AS(view_from_string("sideways"), ParseError);
}

TEST_CASE("manifest round trip: empty and small") {
  std::string path = tmp_file("manifest_empty.ndjson");
  write_manifest({}, path);
  CHECK(read_manifest(path).empty());

  std::vector<TileSample> in = {sample("a", "2024-01-01"), sample("a", "2024-02-01"),
                                sample("b", "2024-01-01", ViewKind::close_up, 1)};
  path = tmp_file("manifest_small.ndjson");
  write_manifest(in, path);
  auto out = read_manifest(path);
  REQUIRE(out.size() == in.size());
  for (std::size_t i = 0; i < in.size(); ++i) CHECK(samples_equal(in[i], out[i]));
}

TEST_CASE("manifest round trip: randomized records") {
  Rng rng(99);
  for (int iter = 0; iter < 25; ++iter) {
    std::vector<TileSample> in;
    int n_trees = 1 + static_cast<int>(rng.next_below(6));
    for (int t = 0; t < n_trees; ++t) {
      int label = static_cast<int>(rng.next_below(5));
      bool labeled = rng.next_double() < 0.8;
      int n_dates = 1 + static_cast<int>(rng.next_below(4));
      for (int d = 0; d < n_dates; ++d) {
        TileSample s = sample("t" + std::to_string(t), "2024-0" + std::to_string(d + 1) + "-15");
        s.mask_fraction = 0.01 + 0.99 * rng.next_double();
        s.source.col_off = static_cast<long long>(rng.next_below(4000)) - 2000;
        s.source.row_off = static_cast<long long>(rng.next_below(4000)) - 2000;
        if (labeled)
          s.species_label = label;
        else
          s.species_label.reset();
        in.push_back(std::move(s));
      }
    }
    std::string path = tmp_file("manifest_rand.ndjson");
    write_manifest(in, path);
    auto out = read_manifest(path);
    REQUIRE(out.size() == in.size());
    for (std::size_t i = 0; i < in.size(); ++i) CHECK(samples_equal(in[i], out[i]));
  }
}

TEST_CASE("manifest rejects invalid records") {
  TileSample bad = sample("x", "2024-01-01");
  bad.species_label = -1;
  CHECK_THROWS_AS(write_manifest({bad}, tmp_file("bad.ndjson")), ValidationError);

  // Duplicate (tree, date, view) key.
  CHECK_THROWS_AS(validate_manifest({sample("x", "2024-01-01"), sample("x", "2024-01-01")}),
                  ValidationError);

  // One tree, two distinct labels.
  CHECK_THROWS_AS(
      validate_manifest({sample("x", "2024-01-01", ViewKind::crown_view, 0),
                         sample("x", "2024-02-01", ViewKind::crown_view, 1)}),
      ValidationError);
}

TEST_CASE("manifest parse error carries the line number") {
  std::string path = tmp_file("truncated.ndjson");
  write_manifest({sample("a", "2024-01-01")}, path);
  {
    std::ofstream out(path, std::ios::app);
    out << "{\"tree_id\": \"b\", \"date_i\n";
  }
  try {
    read_manifest(path);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2") != std::string::npos);
  }
}

TEST_CASE("crown_view samples need a positive mask fraction") {
  TileSample s = sample("x", "2024-01-01");
  s.mask_fraction = 0.0;
  CHECK_THROWS_AS(s.validate(), ValidationError);
  s.view = ViewKind::close_up;
  CHECK_NOTHROW(s.validate());
  s.mask_fraction = 1.5;
  CHECK_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("catalog validation and CSV round trip") {
  SpeciesCatalog catalog = canopy::testing::balanced_catalog(4, 10);
  catalog.species[1].val_count = 3;
  catalog.species[2].test_count = 2;
  catalog.validate();

  std::string path = tmp_file("catalog.csv");
  write_catalog(catalog, path);
  SpeciesCatalog back = read_catalog(path);
  REQUIRE(back.n_species() == 4);
  for (int i = 0; i < 4; ++i) {
    CHECK(back.species[i].class_index == catalog.species[i].class_index);
    CHECK(back.species[i].scientific_name == catalog.species[i].scientific_name);
    CHECK(back.species[i].train_count == catalog.species[i].train_count);
    CHECK(back.species[i].val_count == catalog.species[i].val_count);
    CHECK(back.species[i].test_count == catalog.species[i].test_count);
  }

  catalog.species[2].class_index = 7;  // indices no longer dense
  CHECK_THROWS_AS(catalog.validate(), ValidationError);
}

TEST_CASE("prediction record invariants and round trip") {
  PredictionRecord r;
  r.tree_id = "t";
  r.date_id = "2024-01-01";
  r.probs = {0.25, 0.25, 0.5};
  r.true_label = 2;
  r.validate();

  std::string path = tmp_file("preds.ndjson");
  write_predictions({r}, path);
  auto back = read_predictions(path);
  REQUIRE(back.size() == 1);
  CHECK(back[0].tree_id == "t");
  CHECK(back[0].probs == r.probs);
  CHECK(back[0].true_label == 2);

  r.probs = {0.25, 0.25, 0.25};  // does not sum to 1
  CHECK_THROWS_AS(r.validate(), ValidationError);
  r.probs = {1.25, -0.25};
  CHECK_THROWS_AS(r.validate(), ValidationError);
}

TEST_CASE("metrics report enforces top-k monotonicity") {
  MetricsReport m;
  m.top_k = {{1, 0.6}, {3, 0.8}, {5, 0.9}};
  m.f1_macro = 0.4;
  m.f1_micro = 0.6;
  m.f1_weighted = 0.5;
  m.n_records = 10;
  m.validate();
  m.top_k[3] = 0.5;  // below top-1
  CHECK_THROWS_AS(m.validate(), ValidationError);
}
