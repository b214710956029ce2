#include <gtest/gtest.h>

#include "eak/features.hpp"
#include "eak/rng.hpp"
#include "support/fixtures.hpp"

using namespace eak;

TEST(MinMax, Examples) {
  EXPECT_EQ(minmax_normalize({{1, 2, 3, 4, 5}, 2}).values, (std::vector<double>{0, 0.25, 0.5, 0.75, 1}));
  EXPECT_EQ(minmax_normalize({{7, 7, 7}, 2}).values, (std::vector<double>{0, 0, 0}));
  EXPECT_EQ(minmax_normalize({{3, -1, 1}, 2}).values, (std::vector<double>{1, 0, 0.5}));
}

TEST(WindowFeature, Examples) {
  const std::vector<double> a{1, 2, 3, 4, 5}, b{4, 4, 4, 4, 4}, c{0, 0, 0, 0, 10};
  EXPECT_DOUBLE_EQ(window_feature(a), 0.5);
  EXPECT_DOUBLE_EQ(window_feature(b), 0.0);
  EXPECT_DOUBLE_EQ(window_feature(c), 0.2);
}

namespace {

struct Fixture {
  Volume4D vol;
  Parcellation parc;
  std::vector<Block> blocks;
};

Fixture make_fixture(int n_blocks, std::uint64_t seed) {
  const Dims3 d{4, 4, 2};
  BlockDesign design;
  for (int i = 0; i < n_blocks; ++i) design.blocks.push_back({Condition::positive, 20.0 + 40.0 * i});
  const std::int64_t nt = static_cast<std::int64_t>(design.total_seconds() / 2.0);
  auto vol = Volume4D::zeros(d, nt);
  CounterRng rng(seed);
  for (auto& x : vol.mutable_data()) x = static_cast<float>(rng.normal());
  std::vector<std::int32_t> labels(static_cast<std::size_t>(d.voxels()));
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::int32_t>(i / 8 + 1);
  Parcellation parc(d, labels);
  auto blocks = split_blocks(vol, design, "s");
  return {std::move(vol), std::move(parc), std::move(blocks)};
}

}  // namespace

TEST(AssembleMatrix, ShapeLabelsAndBounds) {
  auto fx = make_fixture(3, 1);
  const auto lookup = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  const auto X = assemble_matrix(fx.blocks, roi_units(fx.parc), lookup);
  EXPECT_EQ(X.rows(), 6u);
  EXPECT_EQ(X.cols(), 4u);
  EXPECT_EQ(X.count_label(1), 3u);
  EXPECT_EQ(X.count_label(-1), 3u);
  for (double v : X.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_EQ(X.feature_ids(), (std::vector<FeatureId>{1, 2, 3, 4}));
  EXPECT_EQ(X.sample_ids()[1].phase, Phase::rest);
}

TEST(AssembleMatrix, SingleBlockSingleUnit) {
  auto fx = make_fixture(1, 2);
  const auto lookup = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  const std::vector<std::int32_t> one{2};
  const auto X = assemble_matrix(fx.blocks, roi_units(fx.parc, one), lookup);
  EXPECT_EQ(X.rows(), 2u);
  EXPECT_EQ(X.cols(), 1u);
}

TEST(AssembleMatrix, VoxelGranularity) {
  auto fx = make_fixture(2, 3);
  const auto lookup = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  const auto X = assemble_matrix(fx.blocks, voxel_units(fx.parc, 3), lookup);
  EXPECT_EQ(X.rows(), 4u);
  EXPECT_EQ(X.cols(), 8u);
  EXPECT_EQ(X.feature_ids().front(), 16);
}

TEST(AssembleMatrix, PositiveAffineTransformLeavesFeaturesUnchanged) {
  auto fx = make_fixture(3, 4);
  auto scaled = fx.vol;
  // Power-of-two scale keeps float arithmetic exact.
  for (auto& x : scaled.mutable_data()) x = 4.0f * x + 0.0f;
  const auto a = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  const auto b = [&](const std::string&) -> const Volume4D& { return scaled; };
  const auto units = voxel_units(fx.parc, 1);
  const auto Xa = assemble_matrix(fx.blocks, units, a);
  const auto Xb = assemble_matrix(fx.blocks, units, b);
  for (std::size_t i = 0; i < Xa.values().size(); ++i) EXPECT_NEAR(Xa.values()[i], Xb.values()[i], 1e-12);

  auto shifted = fx.vol;
  for (auto& x : shifted.mutable_data()) x = 2.5f * x + 7.0f;
  const auto c = [&](const std::string&) -> const Volume4D& { return shifted; };
  const auto Xc = assemble_matrix(fx.blocks, units, c);
  for (std::size_t i = 0; i < Xa.values().size(); ++i) EXPECT_NEAR(Xa.values()[i], Xc.values()[i], 1e-5);
}

TEST(AssembleMatrix, SharedPhaseNormalizationOption) {
  auto fx = make_fixture(2, 5);
  const auto lookup = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  FeatureOptions opts;
  opts.shared_phase_normalization = true;
  const auto X = assemble_matrix(fx.blocks, roi_units(fx.parc), lookup, opts);
  for (double v : X.values()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
  EXPECT_NE(X, assemble_matrix(fx.blocks, roi_units(fx.parc), lookup));
}

TEST(AssembleMatrix, DeterministicAndCsvRoundTrip) {
  auto fx = make_fixture(3, 6);
  const auto lookup = [&](const std::string&) -> const Volume4D& { return fx.vol; };
  const auto X = assemble_matrix(fx.blocks, roi_units(fx.parc), lookup);
  EXPECT_EQ(X, assemble_matrix(fx.blocks, roi_units(fx.parc), lookup));
  const auto dir = testkit::temp_dir("features_csv");
  write_matrix_csv(X, dir / "x.csv");
  EXPECT_EQ(read_matrix_csv(dir / "x.csv"), X);
}
