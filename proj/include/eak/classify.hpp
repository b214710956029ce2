#pragma once

// Group classification from atlas features: feature extraction, RBF grid search
// with shared stratified folds, and quality metrics.

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/atlas.hpp"
#include "eak/error.hpp"
#include "eak/features.hpp"
#include "eak/signal.hpp"
#include "eak/svm.hpp"

namespace eak {

enum class AtlasFeatureMode { alff_per_unit, mean_activation_per_unit, fc_upper_triangle };

inline AtlasFeatureMode parse_feature_mode(const std::string& s) {
  if (s == "alff_per_unit" || s == "alff") return AtlasFeatureMode::alff_per_unit;
  if (s == "mean_activation_per_unit" || s == "mean_activation") return AtlasFeatureMode::mean_activation_per_unit;
  if (s == "fc_upper_triangle" || s == "fc") return AtlasFeatureMode::fc_upper_triangle;
  fail(ErrorKind::Config, "unknown feature mode '" + s + "'");
}

/// One feature vector per subject volume.
inline std::vector<double> atlas_features(const Volume4D& vol, const AtlasSpec& a, AtlasFeatureMode mode,
                                          const Band& band = kAlffBand) {
  if (mode == AtlasFeatureMode::fc_upper_triangle && a.units.size() < 2)
    fail(ErrorKind::InsufficientUnits, "FC features need at least two atlas units");
  const auto series = atlas_series(vol, a);
  std::vector<double> out;
  switch (mode) {
    case AtlasFeatureMode::alff_per_unit: {
      if (vol.nt() < 16) fail(ErrorKind::TooShortForAlff, "ALFF needs at least 16 timepoints");
      const RealFft fft(static_cast<std::size_t>(vol.nt()));
      for (const auto& s : series) out.push_back(alff(s, band, fft));
      break;
    }
    case AtlasFeatureMode::mean_activation_per_unit:
      for (const auto& s : series) out.push_back(window_feature(s.values));
      break;
    case AtlasFeatureMode::fc_upper_triangle:
      for (std::size_t i = 0; i < series.size(); ++i)
        for (std::size_t j = i + 1; j < series.size(); ++j)
          out.push_back(pearson(series[i].values, series[j].values).value_or(0.0));
      break;
  }
  return out;
}

/// Stacks group A (label +1) above group B (label -1).
inline FeatureMatrix group_matrix(const std::vector<std::vector<double>>& group_a,
                                  const std::vector<std::vector<double>>& group_b,
                                  const std::vector<std::string>& ids_a = {}, const std::vector<std::string>& ids_b = {}) {
  if (group_a.empty() || group_b.empty()) fail(ErrorKind::SingleClassInput, "both groups need samples");
  const std::size_t d = group_a.front().size();
  FeatureMatrix X(group_a.size() + group_b.size(), d);
  std::size_t r = 0;
  auto put = [&](const std::vector<std::vector<double>>& g, int y, const std::vector<std::string>& ids, const char* prefix) {
    for (std::size_t i = 0; i < g.size(); ++i, ++r) {
      if (g[i].size() != d) fail(ErrorKind::DimensionMismatch, "feature vectors differ in length");
      for (std::size_t c = 0; c < d; ++c) X(r, c) = g[i][c];
      X.labels()[r] = y;
      X.sample_ids()[r].subject = i < ids.size() ? ids[i] : prefix + std::to_string(i);
    }
  };
  put(group_a, 1, ids_a, "a");
  put(group_b, -1, ids_b, "b");
  return X;
}

/// Column-wise Min-Max scaling to [0, 1]; constant columns become 0. Uses no labels.
inline FeatureMatrix scale_columns(const FeatureMatrix& X) {
  FeatureMatrix out = X;
  for (std::size_t c = 0; c < X.cols(); ++c) {
    double lo = X(0, c), hi = X(0, c);
    for (std::size_t r = 1; r < X.rows(); ++r) {
      lo = std::min(lo, X(r, c));
      hi = std::max(hi, X(r, c));
    }
    for (std::size_t r = 0; r < X.rows(); ++r) out(r, c) = hi > lo ? (X(r, c) - lo) / (hi - lo) : 0.0;
  }
  return out;
}

struct Metrics {
  double accuracy = 0, precision = 0, recall = 0, f_score = 0;
};

/// Positive class is +1. Undefined ratios are reported as 0.
inline Metrics metrics(const Confusion& c) {
  if (c.tp < 0 || c.fp < 0 || c.fn < 0 || c.tn < 0) fail(ErrorKind::Config, "confusion counts must be non-negative");
  if (c.total() == 0) fail(ErrorKind::EmptyConfusion, "confusion matrix is empty");
  auto ratio = [](double a, double b) { return b > 0 ? a / b : 0.0; };
  Metrics m;
  m.accuracy = static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
  m.precision = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fp));
  m.recall = ratio(static_cast<double>(c.tp), static_cast<double>(c.tp + c.fn));
  m.f_score = ratio(2 * m.precision * m.recall, m.precision + m.recall);
  return m;
}

inline const std::vector<double> kDefaultCGrid{0.25, 0.5, 1, 2, 4};
inline const std::vector<double> kDefaultGammaGrid{0.5, 1, 2, 4, 8, 15};

struct Candidate {
  double C = 1;
  double gamma = 1;
  double mean_accuracy = 0;
  Metrics pooled;  // from the confusion summed over folds
  std::vector<Confusion> fold_confusion;
};

struct GridSearchResult {
  std::vector<Candidate> candidates;  // C-major grid order
  std::size_t best = 0;
  std::uint64_t seed = 0;
  int k = 0;
  std::vector<int> fold_assignment;
  TrainConfig base_config;
  std::vector<std::string> warnings;

  const Candidate& best_candidate() const { return candidates.at(best); }
};

struct GridSearchOptions {
  std::vector<double> C_grid = kDefaultCGrid;
  std::vector<double> gamma_grid = kDefaultGammaGrid;
  int k = 10;
  /// Positive-class weight n_neg / n_pos unless explicit weights are given.
  bool balanced = true;
  double class_weight_pos = 1;
  double class_weight_neg = 1;
  double kkt_tolerance = 1e-3;
};

/// Every (C, gamma) is scored on one stratified fold draw. Best is the highest
/// mean accuracy; ties go to the smaller C, then the smaller gamma.
inline GridSearchResult grid_search_cv(const FeatureMatrix& X, const GridSearchOptions& opts, std::uint64_t seed) {
  if (opts.C_grid.empty() || opts.gamma_grid.empty()) fail(ErrorKind::Config, "parameter grids must be non-empty");
  if (X.count_label(1) == 0 || X.count_label(-1) == 0) fail(ErrorKind::SingleClassInput, "both classes are required");
  GridSearchResult res;
  res.seed = seed;
  res.k = effective_folds(X, opts.k, &res.warnings);
  res.fold_assignment = stratified_folds(X.labels(), res.k, seed);
  TrainConfig base;
  base.kkt_tolerance = opts.kkt_tolerance;
  base.class_weight_pos = opts.class_weight_pos;
  base.class_weight_neg = opts.class_weight_neg;
  if (opts.balanced) base = balanced_weights(base, X.labels());
  res.base_config = base;

  for (double C : opts.C_grid)
    for (double g : opts.gamma_grid) res.candidates.push_back({C, g, 0, {}, {}});
  parallel_for(res.candidates.size(), [&](std::size_t i) {
    auto& cand = res.candidates[i];
    TrainConfig cfg = base;
    cfg.C = cand.C;
    const auto cv = cross_validate(X, res.fold_assignment, res.k, cfg, KernelSpec::rbf(cand.gamma));
    cand.mean_accuracy = cv.mean_accuracy;
    cand.fold_confusion = cv.fold_confusion;
    Confusion total;
    for (const auto& c : cv.fold_confusion) total += c;
    cand.pooled = metrics(total);
  });
  for (std::size_t i = 1; i < res.candidates.size(); ++i) {
    const auto& c = res.candidates[i];
    const auto& b = res.candidates[res.best];
    if (c.mean_accuracy > b.mean_accuracy ||
        (c.mean_accuracy == b.mean_accuracy && (c.C < b.C || (c.C == b.C && c.gamma < b.gamma))))
      res.best = i;
  }
  return res;
}

inline nlohmann::json metrics_to_json(const Metrics& m) {
  return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f_score", m.f_score}};
}

inline nlohmann::json grid_search_to_json(const GridSearchResult& r) {
  nlohmann::json j;
  j["seed"] = r.seed;
  j["k"] = r.k;
  j["fold_assignment"] = r.fold_assignment;
  j["class_weight_pos"] = r.base_config.class_weight_pos;
  j["class_weight_neg"] = r.base_config.class_weight_neg;
  j["warnings"] = r.warnings;
  j["candidates"] = nlohmann::json::array();
  for (const auto& c : r.candidates) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : c.fold_confusion) folds.push_back({{"tp", f.tp}, {"fp", f.fp}, {"fn", f.fn}, {"tn", f.tn}});
    j["candidates"].push_back({{"C", c.C},
                               {"gamma", c.gamma},
                               {"mean_accuracy", c.mean_accuracy},
                               {"pooled", metrics_to_json(c.pooled)},
                               {"fold_confusion", std::move(folds)}});
  }
  const auto& b = r.best_candidate();
  j["best"] = {{"C", b.C}, {"gamma", b.gamma}, {"mean_accuracy", b.mean_accuracy}, {"pooled", metrics_to_json(b.pooled)}};
  return j;
}

inline std::string grid_search_csv(const GridSearchResult& r) {
  std::ostringstream out;
  out << std::setprecision(17) << "C,gamma,mean_accuracy,precision,recall,f_score,best\n";
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto& c = r.candidates[i];
    out << c.C << ',' << c.gamma << ',' << c.mean_accuracy << ',' << c.pooled.precision << ',' << c.pooled.recall << ','
        << c.pooled.f_score << ',' << (i == r.best ? 1 : 0) << '\n';
  }
  return out.str();
}

/// Long-format rows "template,metric,value" for bar charts.
inline std::string bar_chart_csv(const std::vector<std::pair<std::string, Metrics>>& per_template) {
  std::ostringstream out;
  out << std::setprecision(17) << "template,metric,value\n";
  for (const auto& [name, m] : per_template) {
    out << name << ",accuracy," << m.accuracy << '\n';
    out << name << ",precision," << m.precision << '\n';
    out << name << ",recall," << m.recall << '\n';
    out << name << ",f_score," << m.f_score << '\n';
  }
  return out.str();
}

}  // namespace eak
