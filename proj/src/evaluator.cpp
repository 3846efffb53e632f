#include "canopy/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "canopy/errors.hpp"
#include "canopy/preprocessing.hpp"

namespace canopy {

using nlohmann::json;

std::vector<PredictionRecord> predict_dataset(ModelBundle& model, const TileDataset& data,
                                              const AugmentConfig& preprocessing,
                                              int batch_size) {
  const int size = model.spec().input_size;
  AugmentConfig cfg = preprocessing;
  cfg.target_size = size;

  std::vector<PredictionRecord> records;
  records.reserve(data.size());
  for (std::size_t start = 0; start < data.size();
       start += static_cast<std::size_t>(batch_size)) {
    std::size_t count = std::min<std::size_t>(batch_size, data.size() - start);
    nn::Batch batch = nn::Batch::zeros(static_cast<int>(count), 3, size, size);
    for (std::size_t i = 0; i < count; ++i) {
      FloatImage img = preprocess_eval(data.image(start + i), cfg);
      float* dst = batch.sample(static_cast<int>(i));
      for (int c = 0; c < 3; ++c)
        for (int y = 0; y < size; ++y)
          for (int x = 0; x < size; ++x)
            dst[(static_cast<std::size_t>(c) * size + y) * size + x] =
                img.data[(static_cast<std::size_t>(y) * size + x) * 3 + c];
    }
    ForwardResult fwd = model.forward(batch, /*train=*/false);
    for (std::size_t i = 0; i < count; ++i) {
      const TileSample& s = data.samples()[start + i];
      PredictionRecord r;
      r.tree_id = s.tree_id;
      r.date_id = s.date_id;
      r.view = s.view;
      r.true_label = s.species_label;

      Eigen::VectorXf col = fwd.logits.col(static_cast<Eigen::Index>(i));
      float mx = col.maxCoeff();
      Eigen::VectorXd e = (col.array() - mx).exp().cast<double>();
      double z = e.sum();
      r.probs.resize(static_cast<std::size_t>(col.size()));
      for (Eigen::Index j = 0; j < col.size(); ++j) r.probs[j] = e[j] / z;
      r.validate();
      records.push_back(std::move(r));
    }
  }
  return records;
}

PredictionRecord soft_vote(const std::vector<PredictionRecord>& records) {
  if (records.empty()) throw ConfigError("soft_vote on empty record list");
  const PredictionRecord& first = records.front();
  PredictionRecord agg;
  agg.tree_id = first.tree_id;
  agg.date_id = "aggregate";
  agg.view = first.view;
  agg.true_label = first.true_label;
  agg.probs.assign(first.probs.size(), 0.0);
  for (const PredictionRecord& r : records) {
    if (r.tree_id != first.tree_id)
      throw ConsistencyError("soft_vote across trees: " + first.tree_id + " vs " + r.tree_id);
    if (r.view != first.view)
      throw ConsistencyError("soft_vote across views for tree " + r.tree_id);
    if (r.probs.size() != agg.probs.size())
      throw ConsistencyError("soft_vote with inconsistent class counts");
    for (std::size_t i = 0; i < r.probs.size(); ++i) agg.probs[i] += r.probs[i];
  }
  for (double& p : agg.probs) p /= static_cast<double>(records.size());
  return agg;
}

namespace {

// Rank of the true class under the tie rule: classes with strictly higher
// probability outrank it, equal-probability classes with a lower index too.
int label_rank(const PredictionRecord& r, int label) {
  int rank = 0;
  double p = r.probs[static_cast<std::size_t>(label)];
  for (std::size_t j = 0; j < r.probs.size(); ++j) {
    if (r.probs[j] > p || (r.probs[j] == p && static_cast<int>(j) < label)) ++rank;
  }
  return rank;
}

int argmax_class(const PredictionRecord& r) {
  int best = 0;
  for (std::size_t j = 1; j < r.probs.size(); ++j)
    if (r.probs[j] > r.probs[static_cast<std::size_t>(best)]) best = static_cast<int>(j);
  return best;
}

}  // namespace

double topk_accuracy(const std::vector<PredictionRecord>& records, int k) {
  if (records.empty()) throw ConfigError("topk_accuracy on empty record list");
  if (k < 1) throw ConfigError("k must be >= 1");
  long correct = 0;
  for (const PredictionRecord& r : records) {
    if (!r.true_label) throw ConsistencyError("unlabeled record for tree " + r.tree_id);
    if (label_rank(r, *r.true_label) < k) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

std::vector<double> per_class_f1(const std::vector<PredictionRecord>& records,
                                 int n_species) {
  std::vector<long> tp(n_species, 0), fp(n_species, 0), fn(n_species, 0);
  for (const PredictionRecord& r : records) {
    if (!r.true_label) throw ConsistencyError("unlabeled record for tree " + r.tree_id);
    int pred = argmax_class(r);
    int truth = *r.true_label;
    if (pred == truth)
      ++tp[truth];
    else {
      ++fp[pred];
      ++fn[truth];
    }
  }
  std::vector<double> f1(n_species, 0.0);
  for (int c = 0; c < n_species; ++c) {
    long denom = 2 * tp[c] + fp[c] + fn[c];
    f1[c] = denom == 0 ? 0.0 : 2.0 * static_cast<double>(tp[c]) / static_cast<double>(denom);
  }
  return f1;
}

F1Triple f1_scores(const std::vector<PredictionRecord>& records, int n_species) {
  if (records.empty()) throw ConfigError("f1_scores on empty record list");
  std::vector<double> f1 = per_class_f1(records, n_species);
  std::vector<long> support(n_species, 0);
  long correct = 0;
  for (const PredictionRecord& r : records) {
    ++support[static_cast<std::size_t>(*r.true_label)];
    if (argmax_class(r) == *r.true_label) ++correct;
  }

  F1Triple out;
  double macro_sum = 0.0;
  double weighted_sum = 0.0;
  for (int c = 0; c < n_species; ++c) {
    macro_sum += f1[c];  // absent classes contribute F1 = 0
    weighted_sum += f1[c] * static_cast<double>(support[c]);
  }
  out.macro = macro_sum / static_cast<double>(n_species);
  out.weighted = weighted_sum / static_cast<double>(records.size());
  // Single-label argmax: globally pooled F1 collapses to accuracy.
  out.micro = static_cast<double>(correct) / static_cast<double>(records.size());
  return out;
}

LongtailReport longtail_report(const std::vector<PredictionRecord>& records,
                               const SpeciesCatalog& catalog) {
  const int n = catalog.n_species();
  std::vector<double> f1 = per_class_f1(records, n);
  std::vector<long> test_support(n, 0);
  for (const PredictionRecord& r : records)
    ++test_support[static_cast<std::size_t>(*r.true_label)];

  LongtailReport report;
  for (int c = 0; c < n; ++c) {
    PerSpeciesF1 row;
    row.class_index = c;
    row.train_count = catalog.species[static_cast<std::size_t>(c)].train_count;
    row.test_count = test_support[static_cast<std::size_t>(c)];
    row.f1 = row.test_count == 0 ? std::nan("") : f1[static_cast<std::size_t>(c)];
    report.rows.push_back(row);
  }

  // Ordering by train count; ties by ascending class index (the catalog is
  // already sorted by descending train count, so this is stable with it).
  std::vector<int> by_train(static_cast<std::size_t>(n));
  for (int c = 0; c < n; ++c) by_train[static_cast<std::size_t>(c)] = c;
  std::stable_sort(by_train.begin(), by_train.end(), [&](int a, int b) {
    return catalog.species[static_cast<std::size_t>(a)].train_count >
           catalog.species[static_cast<std::size_t>(b)].train_count;
  });
  for (int i = 0; i < std::min(n, 10); ++i) report.top10.push_back(by_train[i]);

  // Bottom 10 by smallest train count among species with at least one
  // training sample and a non-zero F1.
  std::vector<int> eligible;
  for (auto it = by_train.rbegin(); it != by_train.rend(); ++it) {
    const PerSpeciesF1& row = report.rows[static_cast<std::size_t>(*it)];
    if (row.train_count >= 1 && !std::isnan(row.f1) && row.f1 > 0.0)
      eligible.push_back(*it);
  }
  for (std::size_t i = 0; i < std::min<std::size_t>(eligible.size(), 10); ++i)
    report.bottom10.push_back(eligible[i]);
  return report;
}

void LongtailReport::write_chart_csv(const SpeciesCatalog& catalog,
                                     const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write long-tail chart data: " + path);
  out << "group,class_index,scientific_name,f1,train_count,test_count\n";
  auto emit = [&](const char* group, int c) {
    const PerSpeciesF1& row = rows[static_cast<std::size_t>(c)];
    out << group << ',' << c << ','
        << catalog.species[static_cast<std::size_t>(c)].scientific_name << ','
        << (std::isnan(row.f1) ? std::string("NA") : std::to_string(row.f1)) << ','
        << row.train_count << ',' << row.test_count << '\n';
  };
  for (int c : top10) emit("top10", c);
  for (int c : bottom10) emit("bottom10", c);
}

MetricsReport compute_metrics(const std::vector<PredictionRecord>& records,
                              const SpeciesCatalog& catalog, EvalMode mode, ViewKind view) {
  if (records.empty()) throw ConfigError("no records to evaluate");
  MetricsReport report;
  report.mode = mode;
  report.view = view;
  report.n_records = static_cast<int>(records.size());
  const int n = catalog.n_species();
  for (int k : {1, 3, 5})
    report.top_k[k] = topk_accuracy(records, std::min(k, n));
  F1Triple f1 = f1_scores(records, n);
  report.f1_macro = f1.macro;
  report.f1_micro = f1.micro;
  report.f1_weighted = f1.weighted;
  if (std::abs(report.f1_micro - report.top_k.at(1)) > 1e-12)
    throw NumericError("micro-F1 does not equal top-1 accuracy");
  report.per_species = longtail_report(records, catalog).rows;
  report.validate();
  return report;
}

MetricsReport evaluate(ModelBundle& model, const TileDataset& full_dataset,
                       const SplitAssignment& assignment, EvalMode mode, ViewKind view,
                       const AugmentConfig& preprocessing, const SpeciesCatalog& catalog) {
  if (mode == EvalMode::soft_voting && view == ViewKind::close_up)
    throw ConfigError("soft voting applies to crown_view only; close-ups are single-date");

  std::vector<TileSample> test;
  for (const TileSample& s : full_dataset.samples()) {
    auto it = assignment.by_tree.find(s.tree_id);
    if (it != assignment.by_tree.end() && it->second == Split::test && s.view == view)
      test.push_back(s);
  }
  if (test.empty()) throw ConfigError("test split is empty for view " + to_string(view));

  TileDataset test_set(test, full_dataset.root());
  std::vector<PredictionRecord> records = predict_dataset(model, test_set, preprocessing);

  if (mode == EvalMode::soft_voting) {
    std::map<std::string, std::vector<PredictionRecord>> by_tree;
    for (PredictionRecord& r : records) by_tree[r.tree_id].push_back(std::move(r));
    records.clear();
    for (const auto& [tree_id, group] : by_tree) records.push_back(soft_vote(group));
  }
  return compute_metrics(records, catalog, mode, view);
}

void write_metrics_json(const MetricsReport& report, const std::string& path,
                        const std::string& config_hash) {
  json j;
  j["mode"] = to_string(report.mode);
  j["view"] = to_string(report.view);
  j["n_records"] = report.n_records;
  for (const auto& [k, acc] : report.top_k) j["top_k"][std::to_string(k)] = acc;
  j["f1"] = {{"macro", report.f1_macro},
             {"micro", report.f1_micro},
             {"weighted", report.f1_weighted}};
  // The zero-fill convention for untested classes is ours, not asserted as
  // the upstream choice; flag it so reports are auditable.
  j["macro_convention"] = "zero-filled over all catalog classes";
  if (!config_hash.empty()) j["config_hash"] = config_hash;
  json per = json::array();
  for (const PerSpeciesF1& row : report.per_species) {
    per.push_back({{"class_index", row.class_index},
                   {"f1", std::isnan(row.f1) ? json(nullptr) : json(row.f1)},
                   {"train_count", row.train_count},
                   {"test_count", row.test_count}});
  }
  j["per_species"] = per;
  std::ofstream out(path);
  if (!out) throw IoError("cannot write metrics: " + path);
  out << j.dump(2) << '\n';
}

std::string render_metrics_table(const MetricsReport& report) {
  std::ostringstream os;
  os << "mode: " << to_string(report.mode) << "  view: " << to_string(report.view)
     << "  records: " << report.n_records << "\n";
  os << "  top-1  top-3  top-5  |  macro  micro  weighted\n  ";
  char buf[64];
  for (int k : {1, 3, 5}) {
    std::snprintf(buf, sizeof(buf), "%5.3f  ", report.top_k.at(k));
    os << buf;
  }
  std::snprintf(buf, sizeof(buf), "|  %5.3f  %5.3f  %5.3f\n", report.f1_macro,
                report.f1_micro, report.f1_weighted);
  os << buf;
  return os.str();
}

}  // namespace canopy
