#include "canopy/core_types.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <tuple>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"

namespace canopy {

using nlohmann::json;

std::string to_string(ViewKind v) {
  return v == ViewKind::crown_view ? "crown_view" : "close_up";
}

ViewKind view_from_string(const std::string& s) {
  if (s == "crown_view") return ViewKind::crown_view;
  if (s == "close_up") return ViewKind::close_up;
  throw ParseError("unknown view kind '" + s + "'");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    default: return "test";
  }
}

Split split_from_string(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ParseError("unknown split '" + s + "'");
}

std::string to_string(EvalMode m) {
  return m == EvalMode::individual_image ? "individual_image" : "soft_voting";
}

EvalMode eval_mode_from_string(const std::string& s) {
  if (s == "individual_image") return EvalMode::individual_image;
  if (s == "soft_voting") return EvalMode::soft_voting;
  throw ParseError("unknown eval mode '" + s + "'");
}

void CrownPolygon::validate(std::optional<int> n_species) const {
  if (tree_id.empty()) throw ValidationError("polygon with empty tree_id");
  if (geometry.empty())
    throw ValidationError("polygon " + tree_id + ": geometry has no exterior ring");
  for (const Ring& ring : geometry.rings) {
    if (ring.size() < 3)
      throw ValidationError("polygon " + tree_id + ": ring with fewer than 3 vertices");
    if (!ring_is_simple(ring))
      throw ValidationError("polygon " + tree_id + ": self-intersecting ring");
  }
  if (polygon_area(geometry) <= 0.0)
    throw ValidationError("polygon " + tree_id + ": zero area");
  if (species_label) {
    if (*species_label < 0 || (n_species && *species_label >= *n_species))
      throw ValidationError("polygon " + tree_id + ": species_label " +
                            std::to_string(*species_label) + " out of range");
  }
}

void TileSample::validate() const {
  if (tree_id.empty()) throw ValidationError("sample with empty tree_id");
  if (date_id.empty())
    throw ValidationError("sample " + tree_id + ": empty field date_id");
  if (image_path.empty())
    throw ValidationError("sample " + tree_id + ": empty field image_path");
  if (mask_fraction < 0.0 || mask_fraction > 1.0)
    throw ValidationError("sample " + tree_id + ": field mask_fraction out of [0,1]");
  if (view == ViewKind::crown_view && mask_fraction <= 0.0)
    throw ValidationError("sample " + tree_id +
                          ": field mask_fraction must be > 0 for crown_view");
  if (species_label && *species_label < 0)
    throw ValidationError("sample " + tree_id + ": field species_label negative");
}

void SpeciesCatalog::validate() const {
  for (std::size_t i = 0; i < species.size(); ++i) {
    const SpeciesEntry& e = species[i];
    if (e.class_index != static_cast<int>(i))
      throw ValidationError("catalog: class indices not dense from 0 at row " +
                            std::to_string(i));
    if (e.train_count < 1)
      throw ValidationError("catalog: species '" + e.scientific_name +
                            "' has no training individual");
    if (e.val_count < 0 || e.test_count < 0)
      throw ValidationError("catalog: negative count for '" + e.scientific_name + "'");
  }
}

void PredictionRecord::validate() const {
  if (probs.empty()) throw ValidationError("prediction " + tree_id + ": empty probs");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !std::isfinite(p))
      throw ValidationError("prediction " + tree_id + ": negative or non-finite prob");
    sum += p;
  }
  if (std::abs(sum - 1.0) > 1e-6)
    throw ValidationError("prediction " + tree_id + ": probs sum to " + std::to_string(sum));
  if (true_label && (*true_label < 0 || *true_label >= static_cast<int>(probs.size())))
    throw ValidationError("prediction " + tree_id + ": true_label out of range");
}

void MetricsReport::validate() const {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0 + 1e-12; };
  double prev = 0.0;
  for (const auto& [k, acc] : top_k) {
    if (!in01(acc)) throw ValidationError("metrics: top-" + std::to_string(k) + " out of [0,1]");
    if (acc + 1e-12 < prev) throw ValidationError("metrics: top-k accuracy not monotone in k");
    prev = acc;
  }
  if (!in01(f1_macro) || !in01(f1_micro) || !in01(f1_weighted))
    throw ValidationError("metrics: F1 out of [0,1]");
}

// ---- Manifest I/O ----

namespace {

json sample_to_json(const TileSample& s) {
  json j;
  j["tree_id"] = s.tree_id;
  j["date_id"] = s.date_id;
  j["view"] = to_string(s.view);
  j["image_path"] = s.image_path;
  j["mask_fraction"] = s.mask_fraction;
  if (s.species_label)
    j["species_label"] = *s.species_label;
  else
    j["species_label"] = nullptr;
  j["source"] = {{"uri", s.source.uri},       {"col_off", s.source.col_off},
                 {"row_off", s.source.row_off}, {"width", s.source.width},
                 {"height", s.source.height},   {"anchor", s.source.anchor}};
  return j;
}

TileSample sample_from_json(const json& j) {
  TileSample s;
  s.tree_id = j.at("tree_id").get<std::string>();
  s.date_id = j.at("date_id").get<std::string>();
  s.view = view_from_string(j.at("view").get<std::string>());
  s.image_path = j.at("image_path").get<std::string>();
  s.mask_fraction = j.at("mask_fraction").get<double>();
  if (!j.at("species_label").is_null()) s.species_label = j["species_label"].get<int>();
  const json& src = j.at("source");
  s.source.uri = src.value("uri", "");
  s.source.col_off = src.value("col_off", 0LL);
  s.source.row_off = src.value("row_off", 0LL);
  s.source.width = src.value("width", 0);
  s.source.height = src.value("height", 0);
  s.source.anchor = src.value("anchor", "centroid");
  return s;
}

}  // namespace

void validate_manifest(const std::vector<TileSample>& samples) {
  std::set<std::tuple<std::string, std::string, std::string>> keys;
  std::map<std::string, std::optional<int>> labels;
  for (const TileSample& s : samples) {
    s.validate();
    auto key = std::make_tuple(s.tree_id, s.date_id, to_string(s.view));
    if (!keys.insert(key).second)
      throw ValidationError("duplicate sample (" + s.tree_id + ", " + s.date_id + ", " +
                            to_string(s.view) + ")");
    auto it = labels.find(s.tree_id);
    if (it == labels.end()) {
      labels.emplace(s.tree_id, s.species_label);
    } else if (it->second != s.species_label) {
      throw ValidationError("tree " + s.tree_id +
                            ": field species_label inconsistent across samples");
    }
  }
}

void write_manifest(const std::vector<TileSample>& samples, const std::string& path) {
  validate_manifest(samples);
  std::ofstream out(path);
  if (!out) throw IoError("cannot open manifest for writing: " + path);
  for (const TileSample& s : samples) out << sample_to_json(s).dump() << '\n';
  if (!out) throw IoError("write failed: " + path);
}

std::vector<TileSample> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<TileSample> samples;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON line");
    try {
      samples.push_back(sample_from_json(j));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate_manifest(samples);
  return samples;
}

// ---- Catalog I/O ----

void write_catalog(const SpeciesCatalog& catalog, const std::string& path) {
  catalog.validate();
  std::ofstream out(path);
  if (!out) throw IoError("cannot open catalog for writing: " + path);
  out << "class_index,scientific_name,train_count,val_count,test_count\n";
  for (const SpeciesEntry& e : catalog.species)
    out << e.class_index << ',' << e.scientific_name << ',' << e.train_count << ','
        << e.val_count << ',' << e.test_count << '\n';
}

SpeciesCatalog read_catalog(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open catalog: " + path);
  std::string line;
  if (!std::getline(in, line) ||
      line != "class_index,scientific_name,train_count,val_count,test_count")
    throw ParseError(path + ": bad catalog header");
  SpeciesCatalog catalog;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    SpeciesEntry e;
    std::string field;
    try {
      std::getline(ss, field, ',');
      e.class_index = std::stoi(field);
      std::getline(ss, e.scientific_name, ',');
      std::getline(ss, field, ',');
      e.train_count = std::stoll(field);
      std::getline(ss, field, ',');
      e.val_count = std::stoll(field);
      std::getline(ss, field, ',');
      e.test_count = std::stoll(field);
    } catch (const std::exception&) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed catalog row");
    }
    catalog.species.push_back(std::move(e));
  }
  catalog.validate();
  return catalog;
}

// ---- Prediction export ----

void write_predictions(const std::vector<PredictionRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open predictions file for writing: " + path);
  for (const PredictionRecord& r : records) {
    r.validate();
    json j;
    j["tree_id"] = r.tree_id;
    j["date_id"] = r.date_id;
    j["view"] = to_string(r.view);
    j["probs"] = r.probs;
    if (r.true_label)
      j["true_label"] = *r.true_label;
    else
      j["true_label"] = nullptr;
    out << j.dump() << '\n';
  }
}

std::vector<PredictionRecord> read_predictions(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open predictions file: " + path);
  std::vector<PredictionRecord> records;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded())
      throw ParseError(path + ":" + std::to_string(lineno) + ": malformed JSON line");
    PredictionRecord r;
    r.tree_id = j.at("tree_id").get<std::string>();
    r.date_id = j.at("date_id").get<std::string>();
    r.view = view_from_string(j.at("view").get<std::string>());
    r.probs = j.at("probs").get<std::vector<double>>();
    if (!j.at("true_label").is_null()) r.true_label = j["true_label"].get<int>();
    r.validate();
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace canopy
