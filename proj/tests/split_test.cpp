#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <map>
#include <set>

#include "canopy/errors.hpp"
#include "canopy/rng.hpp"
#include "canopy/split_manager.hpp"

using namespace canopy;
namespace fs = std::filesystem;

namespace {

std::vector<LabeledTree> species_block(int species, int count) {
  std::vector<LabeledTree> trees;
  for (int i = 0; i < count; ++i)
    trees.push_back({"sp" + std::to_string(species) + "_" + std::to_string(i), species});
  return trees;
}

TileSample sample_of(const std::string& tree, const std::string& date, ViewKind view,
                     std::optional<int> label) {
  TileSample s;
  s.tree_id = tree;
  s.date_id = date;
  s.view = view;
  s.image_path = tree + "_" + date + "_" + to_string(view) + ".png";
  s.mask_fraction = view == ViewKind::crown_view ? 0.5 : 1.0;
  s.species_label = label;
  s.source.uri = s.image_path;
  return s;
}

std::map<Split, int> split_counts(const SplitAssignment& a) {
  std::map<Split, int> counts;
  for (const auto& [tree, split] : a.by_tree) ++counts[split];
  return counts;
}

}  // namespace

TEST_CASE("10 polygons at 70/15/15 give 8/1/1") {
  SplitAssignment a = assign_splits(species_block(0, 10), SplitRatios{}, 7);
  auto counts = split_counts(a);
  CHECK(counts[Split::train] == 8);
  CHECK(counts[Split::val] == 1);
  CHECK(counts[Split::test] == 1);
}

TEST_CASE("singleton species goes to train") {
  SplitAssignment a = assign_splits(species_block(0, 1), SplitRatios{}, 7);
  REQUIRE(a.by_tree.size() == 1);
  CHECK(a.by_tree.begin()->second == Split::train);
}

TEST_CASE("assignment is deterministic and seed-sensitive") {
  std::vector<LabeledTree> trees;
  for (int sp = 0; sp < 5; ++sp) {
    auto block = species_block(sp, 4 + sp * 3);
    trees.insert(trees.end(), block.begin(), block.end());
  }
  SplitAssignment a = assign_splits(trees, SplitRatios{}, 123);
  SplitAssignment b = assign_splits(trees, SplitRatios{}, 123);
  CHECK(a.by_tree == b.by_tree);

  SplitAssignment c = assign_splits(trees, SplitRatios{}, 124);
  CHECK(a.by_tree != c.by_tree);

  // Input order must not matter: the split sorts per species internally.
  std::vector<LabeledTree> reversed(trees.rbegin(), trees.rend());
  SplitAssignment d = assign_splits(reversed, SplitRatios{}, 123);
  CHECK(a.by_tree == d.by_tree);
}

TEST_CASE("ratios are validated") {
  CHECK_THROWS_AS(assign_splits(species_block(0, 5), SplitRatios{0.7, 0.2, 0.2}, 1),
                  ConfigError);
  CHECK_THROWS_AS(assign_splits(std::vector<LabeledTree>{}, SplitRatios{}, 1), ConfigError);
}

TEST_CASE("stratification gives every species with n >= 7 a val and test member") {
  Rng rng(55);
  for (int iter = 0; iter < 20; ++iter) {
    std::vector<LabeledTree> trees;
    std::vector<int> sizes;
    int n_species = 3 + static_cast<int>(rng.next_below(6));
    for (int sp = 0; sp < n_species; ++sp) {
      int n = 1 + static_cast<int>(rng.next_below(20));
      sizes.push_back(n);
      auto block = species_block(sp, n);
      trees.insert(trees.end(), block.begin(), block.end());
    }
    SplitAssignment a = assign_splits(trees, SplitRatios{}, rng.next_u64());
    std::map<int, std::map<Split, int>> per_species;
    for (const LabeledTree& t : trees) ++per_species[t.species_label][a.by_tree.at(t.tree_id)];
    for (int sp = 0; sp < n_species; ++sp) {
      int total = per_species[sp][Split::train] + per_species[sp][Split::val] +
                  per_species[sp][Split::test];
      CHECK(total == sizes[sp]);
      if (sizes[sp] >= 7) {
        CHECK(per_species[sp][Split::val] >= 1);
        CHECK(per_species[sp][Split::test] >= 1);
      }
      // floor-rounding with remainder to train
      CHECK(per_species[sp][Split::val] == sizes[sp] * 15 / 100);
      CHECK(per_species[sp][Split::test] == sizes[sp] * 15 / 100);
    }
  }
}

TEST_CASE("expand_to_samples routes whole trees and inherits close-ups") {
  std::vector<LabeledTree> trees = species_block(0, 10);
  SplitAssignment a = assign_splits(trees, SplitRatios{}, 3);

  std::vector<TileSample> samples;
  for (const LabeledTree& t : trees) {
    for (int d = 0; d < 16; ++d) {
      char date[16];
      std::snprintf(date, sizeof(date), "2023-%02d-01", d + 1);
      samples.push_back(sample_of(t.tree_id, date, ViewKind::crown_view, t.species_label));
    }
    samples.push_back(sample_of(t.tree_id, "2023-01-02", ViewKind::close_up, t.species_label));
    samples.push_back(sample_of(t.tree_id, "2023-06-02", ViewKind::close_up, t.species_label));
  }
  // One unlabeled tree rides along.
  samples.push_back(sample_of("stranger", "2023-01-01", ViewKind::crown_view, std::nullopt));

  SplitSamples split = expand_to_samples(a, samples);
  CHECK(split.unlabeled.size() == 1);
  CHECK(split.train.size() + split.val.size() + split.test.size() == 10 * 18);

  // Every tree's 18 samples (16 crown dates + 2 close-ups) stay together.
  for (const std::vector<TileSample>* bucket : {&split.train, &split.val, &split.test}) {
    for (const TileSample& s : *bucket) {
      Split expected = a.by_tree.at(s.tree_id);
      Split actual = bucket == &split.train ? Split::train
                     : bucket == &split.val ? Split::val
                                            : Split::test;
      CHECK(expected == actual);
    }
  }

  // A labeled sample with an unknown tree is a consistency error.
  samples.push_back(sample_of("ghost", "2023-01-01", ViewKind::crown_view, 0));
  CHECK_THROWS_AS(expand_to_samples(a, samples), ConsistencyError);
}

TEST_CASE("verify_no_leakage finds planted violations") {
  SplitSamples clean;
  clean.train = {sample_of("a", "2023-01-01", ViewKind::crown_view, 0),
                 sample_of("a", "2023-02-01", ViewKind::crown_view, 0)};
  clean.val = {sample_of("b", "2023-01-01", ViewKind::crown_view, 1)};
  CHECK(verify_no_leakage(clean).clean());
  CHECK(verify_no_leakage(SplitSamples{}).clean());

  SplitSamples leaky = clean;
  leaky.val.push_back(sample_of("a", "2023-03-01", ViewKind::crown_view, 0));
  LeakageReport report = verify_no_leakage(leaky);
  REQUIRE(report.violations.size() == 1);
  CHECK(report.violations[0].tree_id == "a");

  write_leakage_report(report, (fs::temp_directory_path() / "leakage.json").string());
}

TEST_CASE("leakage fuzz: pipeline splits are always clean, planted leaks always found") {
  Rng rng(808);
  for (int iter = 0; iter < 50; ++iter) {
    std::vector<LabeledTree> trees;
    int n_species = 2 + static_cast<int>(rng.next_below(5));
    for (int sp = 0; sp < n_species; ++sp) {
      auto block = species_block(sp, 1 + static_cast<int>(rng.next_below(9)));
      trees.insert(trees.end(), block.begin(), block.end());
    }
    std::vector<TileSample> samples;
    for (const LabeledTree& t : trees) {
      int n_dates = 1 + static_cast<int>(rng.next_below(16));
      for (int d = 0; d < n_dates; ++d) {
        char date[16];
        std::snprintf(date, sizeof(date), "2023-%02d-01", d + 1);
        samples.push_back(sample_of(t.tree_id, date, ViewKind::crown_view, t.species_label));
      }
      if (rng.next_double() < 0.5)
        samples.push_back(
            sample_of(t.tree_id, "2023-01-02", ViewKind::close_up, t.species_label));
    }
    SplitAssignment a = assign_splits(trees, SplitRatios{}, rng.next_u64());
    SplitSamples split = expand_to_samples(a, samples);
    CHECK(verify_no_leakage(split).clean());

    // Plant a single-sample leak: move one train sample of a multi-sample
    // tree into val.
    if (split.train.size() >= 2 && split.train[0].tree_id == split.train[1].tree_id) {
      SplitSamples leaky = split;
      leaky.val.push_back(leaky.train.back());
      std::string leaked_tree = leaky.val.back().tree_id;
      leaky.train.pop_back();
      if (std::any_of(leaky.train.begin(), leaky.train.end(),
                      [&](const TileSample& s) { return s.tree_id == leaked_tree; })) {
        LeakageReport report = verify_no_leakage(leaky);
        CHECK(!report.clean());
      }
    }
  }
}

TEST_CASE("kfold partitions each species round-robin") {
  std::vector<LabeledTree> trees = species_block(0, 9);
  std::vector<std::string> warnings;
  auto folds = kfold_assign(trees, 3, 42, &warnings);
  REQUIRE(folds.size() == 3);
  CHECK(warnings.empty());

  std::set<std::string> all_val;
  for (const SplitAssignment& fold : folds) {
    int val_count = 0;
    for (const auto& [tree, split] : fold.by_tree) {
      CHECK(split != Split::test);
      if (split == Split::val) {
        ++val_count;
        CHECK(all_val.insert(tree).second);  // val exactly once across folds
      }
    }
    CHECK(val_count == 3);
  }
  CHECK(all_val.size() == 9);

  // A singleton species trains in every fold and warns.
  auto single = species_block(7, 1);
  trees.insert(trees.end(), single.begin(), single.end());
  warnings.clear();
  folds = kfold_assign(trees, 3, 42, &warnings);
  CHECK(!warnings.empty());
  int val_appearances = 0;
  for (const SplitAssignment& fold : folds)
    if (fold.by_tree.at(single[0].tree_id) == Split::val) ++val_appearances;
  CHECK(val_appearances <= 1);

  CHECK_THROWS_AS(kfold_assign(trees, 1, 42), ConfigError);
}

TEST_CASE("assignment file round trips") {
  SplitAssignment a = assign_splits(species_block(0, 10), SplitRatios{}, 99);
  std::string path = (fs::temp_directory_path() / "assignment.txt").string();
  write_assignment(a, path);
  SplitAssignment back = read_assignment(path);
  CHECK(back.by_tree == a.by_tree);
  CHECK(back.seed == a.seed);
  CHECK(back.r_train == doctest::Approx(a.r_train));
}
