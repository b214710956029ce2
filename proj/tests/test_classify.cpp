#include <gtest/gtest.h>

#include "eak/classify.hpp"
#include "eak/rng.hpp"
#include "eak/synth.hpp"

using namespace eak;

TEST(Metrics, Examples) {
  auto m = metrics({5, 0, 0, 5});
  EXPECT_EQ(m.accuracy, 1);
  EXPECT_EQ(m.f_score, 1);
  m = metrics({3, 1, 2, 4});
  EXPECT_DOUBLE_EQ(m.accuracy, 0.7);
  EXPECT_DOUBLE_EQ(m.precision, 0.75);
  EXPECT_DOUBLE_EQ(m.recall, 0.6);
  EXPECT_NEAR(m.f_score, 2.0 / 3.0, 1e-15);
  m = metrics({0, 0, 5, 5});
  EXPECT_EQ(m.precision, 0);
  EXPECT_EQ(m.recall, 0);
  EXPECT_EQ(m.f_score, 0);
  try {
    metrics({0, 0, 0, 0});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::EmptyConfusion);
  }
}

TEST(Metrics, BoundedAndHarmonic) {
  CounterRng rng(2, 0);
  for (int i = 0; i < 200; ++i) {
    const Confusion c{static_cast<std::int64_t>(rng.below(10)), static_cast<std::int64_t>(rng.below(10)),
                      static_cast<std::int64_t>(rng.below(10)), static_cast<std::int64_t>(rng.below(10)) + 1};
    const auto m = metrics(c);
    for (double v : {m.accuracy, m.precision, m.recall, m.f_score}) {
      EXPECT_GE(v, 0);
      EXPECT_LE(v, 1);
    }
    const double p = c.tp + c.fp ? double(c.tp) / double(c.tp + c.fp) : 0;
    const double r = c.tp + c.fn ? double(c.tp) / double(c.tp + c.fn) : 0;
    EXPECT_DOUBLE_EQ(m.f_score, p + r > 0 ? 2 * p * r / (p + r) : 0);
  }
}

namespace {

AtlasSpec region_atlas(const Parcellation& parc, int n_units) {
  AtlasSpec a;
  a.name = "T";
  a.dims = parc.dims();
  for (int l = 1; l <= n_units; ++l) {
    AtlasUnit u{l, Provenance::sub_roi, {}};
    for (auto v : parc.voxels_of(l)) u.voxels.push_back(parc.dims().unlinear(v));
    a.units.push_back(u);
  }
  return a;
}

}  // namespace

TEST(AtlasFeatures, Lengths) {
  SynthConfig cfg;
  cfg.dims = {10, 10, 3};
  cfg.n_regions = 150;
  cfg.rest_volumes = 40;
  cfg.seed = 3;
  const auto parc = chunk_parcellation(cfg.dims, cfg.n_regions);
  const auto vol = synth_rest_subject(cfg, 'A', 0, parc);
  const auto a = region_atlas(parc, 102);
  EXPECT_EQ(atlas_features(vol, a, AtlasFeatureMode::alff_per_unit).size(), 102u);
  EXPECT_EQ(atlas_features(vol, a, AtlasFeatureMode::mean_activation_per_unit).size(), 102u);
  const auto a7 = region_atlas(parc, 7);
  EXPECT_EQ(atlas_features(vol, a7, AtlasFeatureMode::fc_upper_triangle).size(), 21u);
  try {
    atlas_features(vol, region_atlas(parc, 1), AtlasFeatureMode::fc_upper_triangle);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::InsufficientUnits);
  }
  for (double v : atlas_features(vol, a, AtlasFeatureMode::alff_per_unit)) EXPECT_GT(v, 0);
}

namespace {

FeatureMatrix blobs(int n_pos, int n_neg, int d, double sep, std::uint64_t seed) {
  CounterRng rng(seed, 0);
  std::vector<std::vector<double>> a(static_cast<std::size_t>(n_pos)), b(static_cast<std::size_t>(n_neg));
  for (auto& x : a)
    for (int j = 0; j < d; ++j) x.push_back(rng.normal() + (j < 2 ? sep : 0));
  for (auto& x : b)
    for (int j = 0; j < d; ++j) x.push_back(rng.normal());
  return scale_columns(group_matrix(a, b));
}

}  // namespace

TEST(GridSearch, DefaultGridAndSharedFolds) {
  const auto X = blobs(46, 20, 6, 3.0, 11);
  const auto r = grid_search_cv(X, {}, 5);
  EXPECT_EQ(r.candidates.size(), 30u);
  EXPECT_EQ(r.k, 10);
  EXPECT_GE(r.best_candidate().mean_accuracy, 0.9);
  for (const auto& c : r.candidates) {
    ASSERT_EQ(c.fold_confusion.size(), 10u);
    for (int f = 0; f < 10; ++f) {
      std::int64_t pos = 0, neg = 0;
      for (std::size_t i = 0; i < r.fold_assignment.size(); ++i)
        if (r.fold_assignment[i] == f) (X.labels()[i] > 0 ? pos : neg)++;
      EXPECT_EQ(c.fold_confusion[static_cast<std::size_t>(f)].tp + c.fold_confusion[static_cast<std::size_t>(f)].fn, pos);
      EXPECT_EQ(c.fold_confusion[static_cast<std::size_t>(f)].tn + c.fold_confusion[static_cast<std::size_t>(f)].fp, neg);
    }
    EXPECT_LE(c.mean_accuracy, r.best_candidate().mean_accuracy);
  }
  EXPECT_DOUBLE_EQ(r.base_config.class_weight_pos, 20.0 / 46.0);
  EXPECT_EQ(grid_search_to_json(r)["candidates"].size(), 30u);
}

TEST(GridSearch, SingleCandidateAndTies) {
  const auto X = blobs(10, 10, 3, 2.0, 12);
  GridSearchOptions one;
  one.C_grid = {2};
  one.gamma_grid = {4};
  const auto r1 = grid_search_cv(X, one, 1);
  EXPECT_EQ(r1.best, 0u);
  EXPECT_EQ(r1.best_candidate().C, 2);

  FeatureMatrix flat = X;
  for (std::size_t r = 0; r < flat.rows(); ++r)
    for (std::size_t c = 0; c < flat.cols(); ++c) flat(r, c) = 0.5;
  GridSearchOptions tie;
  tie.C_grid = {4, 0.25, 1};
  tie.gamma_grid = {15, 0.5};
  tie.k = 5;
  const auto r2 = grid_search_cv(flat, tie, 1);
  EXPECT_EQ(r2.best_candidate().C, 0.25);
  EXPECT_EQ(r2.best_candidate().gamma, 0.5);
}

TEST(GridSearch, Errors) {
  const auto X = blobs(10, 10, 3, 2.0, 12);
  GridSearchOptions empty;
  empty.C_grid = {};
  EXPECT_THROW(grid_search_cv(X, empty, 1), Error);
  std::vector<std::size_t> pos_rows;
  for (std::size_t i = 0; i < X.rows(); ++i)
    if (X.labels()[i] > 0) pos_rows.push_back(i);
  EXPECT_THROW(grid_search_cv(X.select_rows(pos_rows), {}, 1), Error);
}

TEST(Output, CsvShapes) {
  const auto X = blobs(8, 8, 2, 2.0, 13);
  GridSearchOptions o;
  o.C_grid = {1, 2};
  o.gamma_grid = {1};
  o.k = 4;
  const auto r = grid_search_cv(X, o, 2);
  const auto csv = grid_search_csv(r);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 3);
  const auto bars = bar_chart_csv({{"PEA", metrics({5, 0, 0, 5})}, {"NEA", metrics({3, 1, 2, 4})}});
  EXPECT_EQ(std::count(bars.begin(), bars.end(), '\n'), 9);
  EXPECT_NE(bars.find("NEA,recall,0.59999"), std::string::npos);
}
