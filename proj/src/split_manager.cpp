#include "canopy/split_manager.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"
#include "canopy/rng.hpp"

namespace canopy {

using nlohmann::json;

namespace {

void check_ratios(const SplitRatios& r) {
  if (r.train <= 0.0 || r.val <= 0.0 || r.test <= 0.0)
    throw ConfigError("split ratios must be positive");
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9)
    throw ConfigError("split ratios must sum to 1");
}

// Species groups keyed and ordered by label so the assignment is a pure
// function of (tree_id set, labels, ratios, seed).
std::map<int, std::vector<std::string>> group_by_species(
    const std::vector<LabeledTree>& trees) {
  std::map<int, std::vector<std::string>> groups;
  for (const LabeledTree& t : trees) groups[t.species_label].push_back(t.tree_id);
  for (auto& [label, ids] : groups) {
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 1; i < ids.size(); ++i)
      if (ids[i] == ids[i - 1])
        throw ValidationError("duplicate tree_id " + ids[i]);
  }
  return groups;
}

}  // namespace

std::vector<LabeledTree> labeled_trees(const std::vector<CrownPolygon>& polygons) {
  std::vector<LabeledTree> out;
  for (const CrownPolygon& p : polygons) {
    if (!p.species_label)
      throw ConfigError("polygon " + p.tree_id + " is unlabeled; splits cover labeled trees");
    out.push_back({p.tree_id, *p.species_label});
  }
  return out;
}

std::vector<LabeledTree> labeled_trees(const std::vector<TileSample>& samples) {
  std::map<std::string, int> seen;
  for (const TileSample& s : samples) {
    if (!s.species_label) continue;
    auto [it, inserted] = seen.emplace(s.tree_id, *s.species_label);
    if (!inserted && it->second != *s.species_label)
      throw ConsistencyError("tree " + s.tree_id + " carries two species labels");
  }
  std::vector<LabeledTree> out;
  for (const auto& [id, label] : seen) out.push_back({id, label});
  return out;
}

SplitAssignment assign_splits(const std::vector<LabeledTree>& trees,
                              const SplitRatios& ratios, std::uint64_t seed) {
  if (trees.empty()) throw ConfigError("no labeled polygons to assign");
  check_ratios(ratios);

  SplitAssignment assignment;
  assignment.seed = seed;
  assignment.r_train = ratios.train;
  assignment.r_val = ratios.val;
  assignment.r_test = ratios.test;

  Rng root(seed);
  for (auto& [label, ids] : group_by_species(trees)) {
    Rng stream = root.split(static_cast<std::uint64_t>(label) + 1);
    stream.shuffle(ids);
    const std::size_t n = ids.size();
    std::size_t n_val = 0, n_test = 0;
    if (n > 1) {
      n_val = static_cast<std::size_t>(std::floor(ratios.val * static_cast<double>(n)));
      n_test = static_cast<std::size_t>(std::floor(ratios.test * static_cast<double>(n)));
    }
    for (std::size_t i = 0; i < n; ++i) {
      Split s = Split::train;
      if (i < n_val)
        s = Split::val;
      else if (i < n_val + n_test)
        s = Split::test;
      assignment.by_tree[ids[i]] = s;
    }
  }
  return assignment;
}

SplitAssignment assign_splits(const std::vector<CrownPolygon>& labeled_polygons,
                              const SplitRatios& ratios, std::uint64_t seed) {
  return assign_splits(labeled_trees(labeled_polygons), ratios, seed);
}

SplitSamples expand_to_samples(const SplitAssignment& assignment,
                               const std::vector<TileSample>& samples) {
  SplitSamples out;
  for (const TileSample& s : samples) {
    auto it = assignment.by_tree.find(s.tree_id);
    if (it == assignment.by_tree.end()) {
      if (s.species_label)
        throw ConsistencyError("labeled sample for tree " + s.tree_id +
                               " missing from the split assignment");
      out.unlabeled.push_back(s);
      continue;
    }
    switch (it->second) {
      case Split::train: out.train.push_back(s); break;
      case Split::val: out.val.push_back(s); break;
      case Split::test: out.test.push_back(s); break;
    }
  }
  return out;
}

LeakageReport verify_no_leakage(const SplitSamples& samples) {
  std::map<std::string, std::set<std::string>> seen;
  auto record = [&](const std::vector<TileSample>& list, const char* name) {
    for (const TileSample& s : list) seen[s.tree_id].insert(name);
  };
  record(samples.train, "train");
  record(samples.val, "val");
  record(samples.test, "test");

  LeakageReport report;
  for (const auto& [tree_id, splits] : seen) {
    if (splits.size() > 1)
      report.violations.push_back({tree_id, {splits.begin(), splits.end()}});
  }
  return report;
}

void write_leakage_report(const LeakageReport& report, const std::string& path) {
  json j = json::array();
  for (const LeakageViolation& v : report.violations)
    j.push_back({{"tree_id", v.tree_id}, {"splits", v.splits}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write leakage report: " + path);
  out << j.dump(2) << '\n';
}

std::vector<SplitAssignment> kfold_assign(const std::vector<LabeledTree>& trees, int k,
                                          std::uint64_t seed,
                                          std::vector<std::string>* warnings) {
  if (k < 2) throw ConfigError("k-fold requires k >= 2, got " + std::to_string(k));
  if (trees.empty()) throw ConfigError("no labeled polygons to assign");

  std::vector<SplitAssignment> folds(static_cast<std::size_t>(k));
  for (int f = 0; f < k; ++f) {
    folds[f].seed = seed;
    folds[f].r_train = 1.0 - 1.0 / k;
    folds[f].r_val = 1.0 / k;
    folds[f].r_test = 0.0;
  }

  Rng root(seed);
  for (auto& [label, ids] : group_by_species(trees)) {
    Rng stream = root.split(static_cast<std::uint64_t>(label) + 1);
    stream.shuffle(ids);
    if (warnings && ids.size() < static_cast<std::size_t>(k))
      warnings->push_back("species " + std::to_string(label) + " has " +
                          std::to_string(ids.size()) + " members, fewer than k=" +
                          std::to_string(k) + "; train-only in uncovered folds");
    for (std::size_t i = 0; i < ids.size(); ++i) {
      int val_fold = static_cast<int>(i % static_cast<std::size_t>(k));
      for (int f = 0; f < k; ++f)
        folds[f].by_tree[ids[i]] = (f == val_fold) ? Split::val : Split::train;
    }
  }
  return folds;
}

std::vector<SplitAssignment> kfold_assign(const std::vector<CrownPolygon>& labeled_polygons,
                                          int k, std::uint64_t seed,
                                          std::vector<std::string>* warnings) {
  return kfold_assign(labeled_trees(labeled_polygons), k, seed, warnings);
}

void write_assignment(const SplitAssignment& assignment, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write assignment: " + path);
  json header = {{"seed", assignment.seed},
                 {"ratios", {assignment.r_train, assignment.r_val, assignment.r_test}},
                 {"rounding", "floor val/test, remainder to train; singletons to train"},
                 {"stratification", "per-species"}};
  out << header.dump() << '\n';
  for (const auto& [tree_id, split] : assignment.by_tree)
    out << tree_id << ',' << to_string(split) << '\n';
}

SplitAssignment read_assignment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open assignment: " + path);
  std::string line;
  if (!std::getline(in, line)) throw ParseError(path + ": empty assignment file");
  json header = json::parse(line, nullptr, false);
  if (header.is_discarded()) throw ParseError(path + ":1: malformed header");

  SplitAssignment a;
  a.seed = header.value("seed", 0ULL);
  if (header.contains("ratios") && header["ratios"].size() == 3) {
    a.r_train = header["ratios"][0].get<double>();
    a.r_val = header["ratios"][1].get<double>();
    a.r_test = header["ratios"][2].get<double>();
  }
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto comma = line.rfind(',');
    if (comma == std::string::npos)
      throw ParseError(path + ":" + std::to_string(lineno) + ": expected tree_id,split");
    a.by_tree[line.substr(0, comma)] = split_from_string(line.substr(comma + 1));
  }
  return a;
}

}  // namespace canopy
