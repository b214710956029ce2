#pragma once

// SVM recursive feature elimination with fold-averaged ranking scores.
//
// Every iteration trains one linear SVM per cross-validation fold on the
// surviving features, scores feature i in fold j as c_ij = w_i^2, averages over
// folds (a_i), records the mean held-out accuracy, and drops the lowest-ranked
// feature(s). The returned subset is the one at the global accuracy maximum;
// see AccuracyTieRule for plateaus.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <map>
#include <sstream>
#include <numeric>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/features.hpp"
#include "eak/rng.hpp"
#include "eak/svm.hpp"

namespace eak {

struct RankingTable {
  std::vector<FeatureId> feature_ids;
  std::vector<std::vector<double>> fold_scores;  // [fold][feature] = w_i^2
  std::vector<double> mean_scores;               // a_i
  double mean_accuracy = 0;
  double held_out_hinge = 0;
  std::vector<int> fold_assignment;
  std::vector<std::string> warnings;
};

/// Trains the k fold models once and derives both the ranking and the CV accuracy.
inline RankingTable rank_and_score(const FeatureMatrix& X, int k, const TrainConfig& cfg, std::uint64_t seed) {
  RankingTable t;
  const int kk = effective_folds(X, k, &t.warnings);
  const auto cv = cross_validate(X, stratified_folds(X.labels(), kk, seed), kk, cfg, KernelSpec::linear());
  t.feature_ids = X.feature_ids();
  t.mean_accuracy = cv.mean_accuracy;
  t.held_out_hinge = cv.held_out_hinge(X.labels());
  t.fold_assignment = cv.fold_assignment;
  t.mean_scores.assign(X.cols(), 0.0);
  for (const auto& m : cv.fold_models) {
    auto w = linear_weights(m);
    for (auto& v : w) v *= v;
    t.fold_scores.push_back(std::move(w));
  }
  for (std::size_t i = 0; i < X.cols(); ++i) {
    double s = 0;
    for (const auto& f : t.fold_scores) s += f[i];
    t.mean_scores[i] = s / static_cast<double>(t.fold_scores.size());
  }
  return t;
}

inline RankingTable rank_scores(const FeatureMatrix& X, int k, const TrainConfig& cfg, std::uint64_t seed) {
  if (k < 2) fail(ErrorKind::TooFewFolds, "ranking needs k >= 2 folds");
  if (X.cols() < 2) fail(ErrorKind::Config, "ranking needs at least two features");
  return rank_and_score(X, k, cfg, seed);
}

struct EliminationSchedule {
  enum class Mode { one, fraction } mode = Mode::one;
  double fraction = 0.1;

  static EliminationSchedule one() { return {}; }
  static EliminationSchedule fraction_of(double f) {
    if (!(f > 0 && f < 1)) fail(ErrorKind::Config, "elimination fraction must be in (0, 1)");
    return {Mode::fraction, f};
  }

  std::size_t count(std::size_t surviving) const {
    if (surviving <= 1) return 0;
    std::size_t n = 1;
    if (mode == Mode::fraction) n = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(fraction * static_cast<double>(surviving))));
    return std::min(n, surviving - 1);
  }
};

struct RfeIteration {
  std::vector<FeatureId> surviving;
  std::vector<double> mean_scores;  // aligned with `surviving`
  double accuracy = 0;
  double hinge = 0;
  std::vector<FeatureId> eliminated;  // in elimination order
};

struct RfeTrace {
  std::vector<RfeIteration> iterations;
  std::vector<FeatureId> best_subset;  // ordered most important first
  double best_accuracy = 0;
  std::size_t best_iteration = 0;
  std::vector<FeatureId> ranking;  // all features, most important first
  std::vector<std::string> warnings;
};

/// Indices of the `count` lowest-ranked features; ties go to the largest feature id.
inline std::vector<std::size_t> lowest_ranked(const std::vector<double>& scores, const std::vector<FeatureId>& ids,
                                              std::size_t count) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return ids[a] > ids[b];
  });
  order.resize(count);
  return order;
}

/// Which subset wins when several iterations share the maximum accuracy.
///  - lowest_hinge: smaller mean held-out hinge loss, then fewer features.
///  - fewest_features: the last iteration on the plateau.
///  - most_features: the first iteration reaching the maximum.
enum class AccuracyTieRule { lowest_hinge, fewest_features, most_features };

inline RfeTrace svm_rfe(const FeatureMatrix& X, int k, const TrainConfig& cfg, const EliminationSchedule& schedule,
                        std::uint64_t seed, AccuracyTieRule tie_rule = AccuracyTieRule::lowest_hinge) {
  if (X.cols() < 1) fail(ErrorKind::Config, "RFE needs at least one feature");
  RfeTrace trace;
  std::vector<std::size_t> columns(X.cols());
  std::iota(columns.begin(), columns.end(), std::size_t{0});

  for (std::uint64_t iter = 0;; ++iter) {
    const auto sub = X.select_cols(columns);
    auto table = rank_and_score(sub, k, cfg, derive_seed(seed, iter));
    if (iter == 0) trace.warnings = table.warnings;

    RfeIteration rec;
    rec.surviving = sub.feature_ids();
    rec.mean_scores = table.mean_scores;
    rec.accuracy = table.mean_accuracy;
    rec.hinge = table.held_out_hinge;

    const std::size_t drop = schedule.count(columns.size());
    if (drop > 0) {
      const auto victims = lowest_ranked(table.mean_scores, sub.feature_ids(), drop);
      std::vector<bool> gone(columns.size(), false);
      for (auto v : victims) {
        gone[v] = true;
        rec.eliminated.push_back(sub.feature_ids()[v]);
      }
      std::vector<std::size_t> next;
      for (std::size_t i = 0; i < columns.size(); ++i)
        if (!gone[i]) next.push_back(columns[i]);
      columns = std::move(next);
    }
    trace.iterations.push_back(std::move(rec));
    if (drop == 0) break;
  }

  // Global accuracy maximum; ties resolved per `tie_rule`. Iterations run from
  // most to fewest features.
  trace.best_iteration = 0;
  for (std::size_t i = 1; i < trace.iterations.size(); ++i) {
    const auto& cand = trace.iterations[i];
    const auto& best = trace.iterations[trace.best_iteration];
    bool take = cand.accuracy > best.accuracy;
    if (cand.accuracy == best.accuracy) {
      switch (tie_rule) {
        case AccuracyTieRule::fewest_features: take = true; break;
        case AccuracyTieRule::most_features: take = false; break;
        case AccuracyTieRule::lowest_hinge: take = cand.hinge <= best.hinge; break;
      }
    }
    if (take) trace.best_iteration = i;
  }
  trace.best_accuracy = trace.iterations[trace.best_iteration].accuracy;

  // Importance: the last survivor first, then features in reverse elimination order.
  const auto& last = trace.iterations.back();
  {
    std::vector<std::size_t> order(last.surviving.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      if (last.mean_scores[a] != last.mean_scores[b]) return last.mean_scores[a] > last.mean_scores[b];
      return last.surviving[a] < last.surviving[b];
    });
    for (auto o : order) trace.ranking.push_back(last.surviving[o]);
  }
  for (auto it = trace.iterations.rbegin(); it != trace.iterations.rend(); ++it)
    for (auto e = it->eliminated.rbegin(); e != it->eliminated.rend(); ++e) trace.ranking.push_back(*e);

  const auto& best = trace.iterations[trace.best_iteration].surviving;
  for (auto id : trace.ranking)
    if (std::find(best.begin(), best.end(), id) != best.end()) trace.best_subset.push_back(id);
  return trace;
}

struct TwoStageResult {
  RfeTrace roi_trace;
  std::vector<std::int32_t> characteristic_rois;  // most important first
  std::map<std::int32_t, std::vector<std::int64_t>> sub_rois;  // ROI label -> surviving voxel indices
  std::map<std::int32_t, RfeTrace> voxel_traces;
  std::vector<std::string> warnings;
};

struct TwoStageOptions {
  int folds = 10;
  TrainConfig cfg{};
  EliminationSchedule roi_schedule = EliminationSchedule::one();
  EliminationSchedule voxel_schedule = EliminationSchedule::one();
};

/// Stage 1 selects ROIs from the ROI matrix; stage 2 runs RFE on each selected
/// ROI's voxel matrix, obtained from `voxel_matrix(label)`.
inline TwoStageResult two_stage_select(const FeatureMatrix& roi_matrix,
                                       const std::function<FeatureMatrix(std::int32_t)>& voxel_matrix,
                                       const TwoStageOptions& opts, std::uint64_t seed) {
  TwoStageResult r;
  r.roi_trace = svm_rfe(roi_matrix, opts.folds, opts.cfg, opts.roi_schedule, derive_seed(seed, 0x524f49));
  r.warnings = r.roi_trace.warnings;
  for (auto id : r.roi_trace.best_subset) {
    const auto label = static_cast<std::int32_t>(id);
    const auto V = voxel_matrix(label);
    if (V.cols() == 0) {
      r.warnings.push_back("ROI " + std::to_string(label) + " has no voxels; dropped");
      continue;
    }
    auto trace = svm_rfe(V, opts.folds, opts.cfg, opts.voxel_schedule, derive_seed(seed, 0x564f58000000ULL + static_cast<std::uint64_t>(label)));
    if (trace.best_subset.empty()) {
      r.warnings.push_back("ROI " + std::to_string(label) + " kept no voxels; dropped");
      continue;
    }
    r.characteristic_rois.push_back(label);
    std::vector<std::int64_t> voxels(trace.best_subset.begin(), trace.best_subset.end());
    std::sort(voxels.begin(), voxels.end());
    r.sub_rois[label] = std::move(voxels);
    r.voxel_traces[label] = std::move(trace);
  }
  return r;
}

// Export

inline nlohmann::json trace_to_json(const RfeTrace& t) {
  nlohmann::json j;
  j["best_subset"] = t.best_subset;
  j["best_accuracy"] = t.best_accuracy;
  j["best_iteration"] = t.best_iteration;
  j["ranking"] = t.ranking;
  j["iterations"] = nlohmann::json::array();
  for (std::size_t i = 0; i < t.iterations.size(); ++i) {
    const auto& it = t.iterations[i];
    j["iterations"].push_back({{"iteration", i},
                               {"n_features", it.surviving.size()},
                               {"accuracy", it.accuracy},
                               {"held_out_hinge", it.hinge},
                               {"eliminated", it.eliminated},
                               {"surviving", it.surviving},
                               {"mean_scores", it.mean_scores}});
  }
  return j;
}

inline std::string accuracy_curve_csv(const RfeTrace& t) {
  std::ostringstream out;
  out << std::setprecision(17) << "iteration,n_features,accuracy\n";
  for (std::size_t i = 0; i < t.iterations.size(); ++i)
    out << i << ',' << t.iterations[i].surviving.size() << ',' << t.iterations[i].accuracy << '\n';
  return out.str();
}

}  // namespace eak
