#include <gtest/gtest.h>

#include <cmath>
#include <complex>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "eak/rng.hpp"
#include "eak/signal.hpp"

using namespace eak;

namespace {

Series sine(std::size_t n, double dt, double f, double amp, double phase = 0) {
  Series s{std::vector<double>(n), dt};
  for (std::size_t t = 0; t < n; ++t)
    s.values[t] = amp * std::sin(2 * std::numbers::pi * f * static_cast<double>(t) * dt + phase);
  return s;
}

// O(n^2) DFT-based ALFF, independent of FFTW.
double direct_alff(const std::vector<double>& raw, double dt, Band band) {
  const std::size_t n = raw.size();
  // least squares line via normal equations
  double st = 0, sv = 0, stt = 0, stv = 0;
  for (std::size_t t = 0; t < n; ++t) {
    st += t;
    sv += raw[t];
    stt += double(t) * t;
    stv += t * raw[t];
  }
  const double det = n * stt - st * st;
  const double b = (n * stv - st * sv) / det, a = (sv - b * st) / n;
  std::vector<double> x(n);
  for (std::size_t t = 0; t < n; ++t) x[t] = raw[t] - a - b * t;
  double acc = 0;
  int bins = 0;
  for (std::size_t k = 0; k <= n / 2; ++k) {
    const double f = k / (n * dt);
    if (f < band.lo_hz - 1e-12 || f > band.hi_hz + 1e-12) continue;
    std::complex<double> X = 0;
    for (std::size_t t = 0; t < n; ++t) X += x[t] * std::polar(1.0, -2 * std::numbers::pi * double(k * t) / n);
    const double scale = (k == 0 || (n % 2 == 0 && k == n / 2)) ? 1 : 2;
    acc += std::sqrt(scale * std::norm(X) / n);
    ++bins;
  }
  return acc / bins;
}

}  // namespace

TEST(Bandpass, KeepsInBandSine) {
  const auto s = sine(200, 2.0, 0.05, 1.0);
  const auto out = bandpass(s, kPreprocessBand);
  for (std::size_t t = 0; t < s.size(); ++t) EXPECT_NEAR(out.values[t], s.values[t], 1e-6);
}

TEST(Bandpass, RemovesOutOfBandSine) {
  const auto out = bandpass(sine(200, 2.0, 0.2, 1.0), kPreprocessBand);
  double power = 0;
  for (double v : out.values) power += v * v;
  EXPECT_LE(power / 200, 1e-10);
}

TEST(Bandpass, ConstantGoesToZero) {
  const auto out = bandpass(Series{std::vector<double>(64, 5.0), 2.0}, kPreprocessBand);
  for (double v : out.values) EXPECT_NEAR(v, 0, 1e-12);
}

TEST(Bandpass, RejectsBadBands) {
  const Series s{std::vector<double>(64, 1.0), 2.0};
  EXPECT_THROW(bandpass(s, Band{0.1, 0.05}), Error);
  EXPECT_THROW(bandpass(s, Band{0.01, 0.3}), Error);
  EXPECT_THROW(bandpass(Series{std::vector<double>(4, 1.0), 2.0}, kPreprocessBand), Error);
}

TEST(Alff, ConstantIsZero) { EXPECT_NEAR(alff(Series{std::vector<double>(100, 3.0), 2.0}), 0, 1e-12); }

TEST(Alff, ScalesLinearlyWithAmplitude) {
  const auto a = alff(sine(120, 2.0, 0.05, 1.0, 0.3));
  const auto b = alff(sine(120, 2.0, 0.05, 2.0, 0.3));
  EXPECT_NEAR(b, 2 * a, 1e-9);
}

TEST(Alff, MatchesDirectDft) {
  CounterRng rng(7, 1);
  for (std::size_t n : {16u, 17u, 64u, 99u, 150u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal();
    const double dt = 2.0;
    EXPECT_NEAR(alff(Series{x, dt}), direct_alff(x, dt, kAlffBand), 1e-9) << n;
  }
}

TEST(Alff, InvariantToOffsetAndTrend) {
  CounterRng rng(8, 1);
  std::vector<double> x(90), y(90);
  for (std::size_t t = 0; t < x.size(); ++t) {
    x[t] = rng.normal();
    y[t] = x[t] + 40.0 - 0.3 * static_cast<double>(t);
  }
  EXPECT_NEAR(alff(Series{x, 2.0}), alff(Series{y, 2.0}), 1e-9);
}

TEST(Alff, ParsevalHolds) {
  CounterRng rng(9, 1);
  for (std::size_t n : {32u, 33u}) {
    std::vector<double> x(n);
    for (auto& v : x) v = rng.normal() + 0.1 * static_cast<double>(&v - x.data());
    const auto d = detrend(x);
    const RealFft fft(n);
    const auto p = periodogram(d, 2.0, fft);
    double sp = 0, sx = 0;
    for (double v : p.power) sp += v;
    for (double v : d) sx += v * v;
    EXPECT_NEAR(sp, sx, 1e-6);
  }
}

TEST(Alff, ErrorsOnShortOrEmptyBand) {
  EXPECT_THROW(alff(Series{std::vector<double>(15, 1.0), 2.0}), Error);
  try {
    alff(Series{std::vector<double>(20, 1.0), 2.0}, Band{0.001, 0.002});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BandEmpty);
  }
}

TEST(AlffMap, MaskAndValues) {
  const Dims3 d{2, 2, 1};
  auto vol = Volume4D::zeros(d, 40);
  for (std::int64_t t = 0; t < 40; ++t) vol.at(1, t) = static_cast<float>(std::sin(2 * std::numbers::pi * 0.05 * 2.0 * t));
  std::vector<std::uint8_t> mask{1, 1, 0, 1};
  const auto m = alff_map(vol, mask);
  EXPECT_EQ(m.mask, mask);
  EXPECT_NEAR(m.values[0], 0, 1e-9);
  EXPECT_GT(m.values[1], 0.1);
  EXPECT_EQ(m.values[2], 0);
  EXPECT_EQ(m.mask_voxels(), (std::vector<std::int64_t>{0, 1, 3}));

  const auto empty = alff_map(Volume4D::zeros(d, 5), std::vector<std::uint8_t>(4, 0));
  for (double v : empty.values) EXPECT_EQ(v, 0);
  EXPECT_THROW(alff_map(vol, std::vector<std::uint8_t>(3, 1)), Error);
}

TEST(Smooth, PreservesConstantAndSpreadsImpulse) {
  const Dims3 d{9, 9, 9};
  auto c = Volume4D::zeros(d, 1);
  for (auto& v : c.mutable_data()) v = 2.5f;
  const auto cs = gaussian_smooth(c);
  for (float v : cs.data()) EXPECT_NEAR(v, 2.5f, 1e-5);

  auto imp = Volume4D::zeros(d, 1);
  const auto centre = d.linear({4, 4, 4});
  imp.at(centre, 0) = 1.0f;
  const auto s = gaussian_smooth(imp);
  double total = 0;
  for (float v : s.data()) total += v;
  EXPECT_NEAR(total, 1.0, 1e-5);
  EXPECT_LT(s.at(centre, 0), 1.0f);
  EXPECT_NEAR(s.at(d.linear({3, 4, 4}), 0), s.at(d.linear({5, 4, 4}), 0), 1e-7);
  EXPECT_NEAR(s.at(d.linear({4, 3, 4}), 0), s.at(d.linear({4, 4, 5}), 0), 1e-7);
}

TEST(StatMapFile, RoundTrip) {
  const auto dir = std::filesystem::temp_directory_path() / "eak_statmap";
  std::filesystem::create_directories(dir);
  StatMap m{{3, 2, 1}, {0.5, -1.25, 3, 0, 1e-300, 7}, {1, 1, 0, 1, 1, 0}, MapKind::t};
  save_statmap(m, dir / "t.json");
  EXPECT_EQ(load_statmap(dir / "t.json"), m);
  std::ofstream(dir / "t.f64", std::ios::binary | std::ios::trunc) << "abc";
  EXPECT_THROW(load_statmap(dir / "t.json"), Error);
}
