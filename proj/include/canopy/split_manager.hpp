#pragma once

#include <string>
#include <vector>

#include "canopy/core_types.hpp"

namespace canopy {

struct SplitRatios {
  double train = 0.7;
  double val = 0.15;
  double test = 0.15;
};

// The split machinery only needs identities and labels, not geometry.
struct LabeledTree {
  std::string tree_id;
  int species_label = 0;
};

std::vector<LabeledTree> labeled_trees(const std::vector<CrownPolygon>& polygons);
std::vector<LabeledTree> labeled_trees(const std::vector<TileSample>& samples);

// Per-species stratified assignment. Within each species, tree ids are
// sorted, shuffled by a per-species substream of the pinned PRNG, and
// partitioned floor(r_val*n) / floor(r_test*n) with the remainder to train.
// Single-individual species go entirely to train.
SplitAssignment assign_splits(const std::vector<LabeledTree>& trees,
                              const SplitRatios& ratios, std::uint64_t seed);
SplitAssignment assign_splits(const std::vector<CrownPolygon>& labeled_polygons,
                              const SplitRatios& ratios, std::uint64_t seed);

struct SplitSamples {
  std::vector<TileSample> train;
  std::vector<TileSample> val;
  std::vector<TileSample> test;
  std::vector<TileSample> unlabeled;  // samples of trees absent from the assignment
};

// Routes every sample of a tree (all dates, both views) to its tree's split.
// Labeled samples whose tree_id the assignment does not know raise
// ConsistencyError.
SplitSamples expand_to_samples(const SplitAssignment& assignment,
                               const std::vector<TileSample>& samples);

struct LeakageViolation {
  std::string tree_id;
  std::vector<std::string> splits;  // the splits this tree's samples span
};

struct LeakageReport {
  std::vector<LeakageViolation> violations;
  bool clean() const { return violations.empty(); }
};

// Reports every tree whose samples span more than one of the three splits.
LeakageReport verify_no_leakage(const SplitSamples& samples);

void write_leakage_report(const LeakageReport& report, const std::string& path);

// Stratified k-fold at polygon level: within each species, members are dealt
// round-robin to folds; fold i's members are val, the rest train. Species
// with fewer members than k sit in train for the uncovered folds (warned).
std::vector<SplitAssignment> kfold_assign(const std::vector<LabeledTree>& trees, int k,
                                          std::uint64_t seed,
                                          std::vector<std::string>* warnings = nullptr);
std::vector<SplitAssignment> kfold_assign(const std::vector<CrownPolygon>& labeled_polygons,
                                          int k, std::uint64_t seed,
                                          std::vector<std::string>* warnings = nullptr);

// Assignment file: one JSON header line (seed, ratios, rounding rule), then
// CSV lines tree_id,split.
void write_assignment(const SplitAssignment& assignment, const std::string& path);
SplitAssignment read_assignment(const std::string& path);

}  // namespace canopy
