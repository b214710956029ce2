#pragma once

// Spectral utilities on FFTW: brick-wall bandpass, linear detrend, one-sided
// periodogram, ALFF, plus separable Gaussian smoothing of volumes.
//
// Periodogram: P_0 = |X_0|^2 / n, P_k = 2 |X_k|^2 / n for 0 < k < n/2, and
// P_{n/2} = |X_{n/2}|^2 / n for even n, at frequency k / (n * dt). Its sum equals
// the sum of squares of the input (Parseval).
//
// ALFF: mean over bins with lo <= f <= hi of sqrt(P_k), after linear detrend.

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <string>
#include <span>
#include <vector>

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/parallel.hpp"
#include "eak/volume.hpp"

namespace eak {

namespace detail {

inline std::mutex& fftw_planner_mutex() {
  static std::mutex m;
  return m;
}

}  // namespace detail

/// Real FFT of a fixed length. Plans once; execution is thread-safe.
class RealFft {
 public:
  explicit RealFft(std::size_t n) : n_(n) {
    std::vector<double> in(n);
    std::vector<std::complex<double>> out(n / 2 + 1);
    std::lock_guard lock(detail::fftw_planner_mutex());
    forward_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(), reinterpret_cast<fftw_complex*>(out.data()),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    inverse_ = fftw_plan_dft_c2r_1d(static_cast<int>(n), reinterpret_cast<fftw_complex*>(out.data()), in.data(),
                                    FFTW_ESTIMATE | FFTW_UNALIGNED);
    if (!forward_ || !inverse_) fail(ErrorKind::Numerical, "FFTW planning failed");
  }
  ~RealFft() {
    std::lock_guard lock(detail::fftw_planner_mutex());
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  std::size_t size() const { return n_; }

  std::vector<std::complex<double>> forward(std::span<const double> x) const {
    if (x.size() != n_) fail(ErrorKind::DimensionMismatch, "FFT length mismatch");
    std::vector<double> in(x.begin(), x.end());
    std::vector<std::complex<double>> out(n_ / 2 + 1);
    fftw_execute_dft_r2c(forward_, in.data(), reinterpret_cast<fftw_complex*>(out.data()));
    return out;
  }

  /// Unnormalized inverse; divide by n for the true inverse.
  std::vector<double> inverse(std::vector<std::complex<double>> spectrum) const {
    std::vector<double> out(n_);
    fftw_execute_dft_c2r(inverse_, reinterpret_cast<fftw_complex*>(spectrum.data()), out.data());
    return out;
  }

 private:
  std::size_t n_;
  fftw_plan forward_ = nullptr;
  fftw_plan inverse_ = nullptr;
};

struct Band {
  double lo_hz = 0.01;
  double hi_hz = 0.08;
};

inline constexpr Band kPreprocessBand{0.01, 0.1};
inline constexpr Band kAlffBand{0.01, 0.08};

namespace detail {

inline bool in_band(double f, const Band& b) {
  constexpr double eps = 1e-12;
  return f >= b.lo_hz - eps && f <= b.hi_hz + eps;
}

}  // namespace detail

inline Series bandpass(const Series& s, const Band& band, const RealFft& fft) {
  const std::size_t n = s.size();
  if (n < 8) fail(ErrorKind::BandOutOfRange, "bandpass needs at least 8 samples");
  const double nyquist = 0.5 / s.sampling_interval_s;
  if (!(band.lo_hz >= 0 && band.lo_hz < band.hi_hz && band.hi_hz <= nyquist + 1e-12))
    fail(ErrorKind::BandOutOfRange, "band must satisfy 0 <= lo < hi <= Nyquist");
  auto spec = fft.forward(s.values);
  const double df = 1.0 / (static_cast<double>(n) * s.sampling_interval_s);
  for (std::size_t k = 0; k < spec.size(); ++k)
    if (!detail::in_band(static_cast<double>(k) * df, band)) spec[k] = 0;
  auto out = fft.inverse(std::move(spec));
  for (auto& v : out) v /= static_cast<double>(n);
  return {std::move(out), s.sampling_interval_s};
}

inline Series bandpass(const Series& s, const Band& band) { return bandpass(s, band, RealFft(s.size())); }

/// Removes the least-squares line through (t, v_t), t = 0..n-1.
inline std::vector<double> detrend(std::span<const double> v) {
  const std::size_t n = v.size();
  std::vector<double> out(v.begin(), v.end());
  if (n < 2) {
    for (auto& x : out) x = 0;
    return out;
  }
  const double tm = (static_cast<double>(n) - 1) / 2;
  double vm = 0;
  for (double x : v) vm += x;
  vm /= static_cast<double>(n);
  double sxy = 0, sxx = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double dt = static_cast<double>(t) - tm;
    sxy += dt * (v[t] - vm);
    sxx += dt * dt;
  }
  const double slope = sxy / sxx;
  for (std::size_t t = 0; t < n; ++t) out[t] = v[t] - vm - slope * (static_cast<double>(t) - tm);
  return out;
}

struct Periodogram {
  std::vector<double> freq_hz;
  std::vector<double> power;
};

inline Periodogram periodogram(std::span<const double> x, double dt, const RealFft& fft) {
  const std::size_t n = x.size();
  const auto spec = fft.forward(x);
  Periodogram p;
  p.freq_hz.resize(spec.size());
  p.power.resize(spec.size());
  for (std::size_t k = 0; k < spec.size(); ++k) {
    const bool edge = k == 0 || (n % 2 == 0 && k == n / 2);
    p.freq_hz[k] = static_cast<double>(k) / (static_cast<double>(n) * dt);
    p.power[k] = (edge ? 1.0 : 2.0) * std::norm(spec[k]) / static_cast<double>(n);
  }
  return p;
}

inline double alff(const Series& s, const Band& band, const RealFft& fft) {
  if (s.size() < 16) fail(ErrorKind::TooShortForAlff, "ALFF needs at least 16 samples");
  const auto p = periodogram(detrend(s.values), s.sampling_interval_s, fft);
  double acc = 0;
  std::size_t bins = 0;
  for (std::size_t k = 0; k < p.power.size(); ++k) {
    if (!detail::in_band(p.freq_hz[k], band)) continue;
    acc += std::sqrt(p.power[k]);
    ++bins;
  }
  if (bins == 0) fail(ErrorKind::BandEmpty, "no frequency bins fall inside the ALFF band");
  return acc / static_cast<double>(bins);
}

inline double alff(const Series& s, const Band& band = kAlffBand) { return alff(s, band, RealFft(s.size())); }

enum class MapKind { alff, t, p };

/// Per-voxel scalar map; `mask` flags the voxels the map is defined on.
struct StatMap {
  Dims3 dims;
  std::vector<double> values;
  std::vector<std::uint8_t> mask;
  MapKind kind = MapKind::alff;

  std::vector<std::int64_t> mask_voxels() const {
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < mask.size(); ++i)
      if (mask[i]) out.push_back(static_cast<std::int64_t>(i));
    return out;
  }
  friend bool operator==(const StatMap&, const StatMap&) = default;
};

inline std::string to_string(MapKind k) { return k == MapKind::alff ? "alff" : k == MapKind::t ? "t" : "p"; }

inline MapKind parse_map_kind(const std::string& s) {
  if (s == "alff") return MapKind::alff;
  if (s == "t") return MapKind::t;
  if (s == "p") return MapKind::p;
  fail(ErrorKind::SchemaError, "unknown map kind '" + s + "'");
}

/// JSON header {dims, kind, mask: [voxel indices], data_file} plus little-endian
/// float64 values in `data_file` (next to the header).
inline void save_statmap(const StatMap& m, const std::filesystem::path& header_path) {
  auto data = header_path;
  data.replace_extension(".f64");
  nlohmann::json h{{"dims", {m.dims.nx, m.dims.ny, m.dims.nz}},
                   {"kind", to_string(m.kind)},
                   {"mask", m.mask_voxels()},
                   {"data_file", data.filename().string()}};
  std::ofstream hj(header_path);
  std::ofstream bin(data, std::ios::binary);
  if (!hj || !bin) fail(ErrorKind::Config, "cannot write " + header_path.string());
  hj << h.dump(1) << '\n';
  bin.write(reinterpret_cast<const char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
}

inline StatMap load_statmap(const std::filesystem::path& header_path) {
  std::ifstream hj(header_path);
  if (!hj) fail(ErrorKind::Config, "cannot open " + header_path.string());
  StatMap m;
  std::string data_file;
  try {
    const auto h = nlohmann::json::parse(hj);
    const auto& d = h.at("dims");
    m.dims = {d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(), d.at(2).get<std::int64_t>()};
    m.kind = parse_map_kind(h.at("kind").get<std::string>());
    m.mask.assign(static_cast<std::size_t>(m.dims.voxels()), 0);
    for (const auto& v : h.at("mask")) {
      const auto i = v.get<std::int64_t>();
      if (i < 0 || i >= m.dims.voxels()) fail(ErrorKind::SchemaError, "mask index outside grid");
      m.mask[static_cast<std::size_t>(i)] = 1;
    }
    data_file = h.at("data_file").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, header_path.string() + ": " + e.what());
  }
  std::ifstream bin(header_path.parent_path() / data_file, std::ios::binary);
  if (!bin) fail(ErrorKind::Config, "cannot open map data " + data_file);
  m.values.resize(m.mask.size());
  bin.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (bin.gcount() != static_cast<std::streamsize>(m.values.size() * sizeof(double)) || bin.peek() != EOF)
    fail(ErrorKind::DimensionMismatch, "map data size does not match dims");
  for (auto v : m.mask_voxels())
    if (!std::isfinite(m.values[static_cast<std::size_t>(v)])) fail(ErrorKind::NonFinite, "map has non-finite values on mask");
  return m;
}

inline std::vector<std::uint8_t> full_mask(const Dims3& d) {
  return std::vector<std::uint8_t>(static_cast<std::size_t>(d.voxels()), 1);
}

inline StatMap alff_map(const Volume4D& vol, const std::vector<std::uint8_t>& mask, const Band& band = kAlffBand) {
  if (static_cast<std::int64_t>(mask.size()) != vol.voxels()) fail(ErrorKind::DimensionMismatch, "mask size differs from grid");
  StatMap m{vol.dims(), std::vector<double>(mask.size(), 0.0), mask, MapKind::alff};
  if (std::none_of(mask.begin(), mask.end(), [](auto v) { return v != 0; })) return m;
  if (vol.nt() < 16) fail(ErrorKind::TooShortForAlff, "ALFF needs at least 16 timepoints");
  const RealFft fft(static_cast<std::size_t>(vol.nt()));
  parallel_for(mask.size(), [&](std::size_t v) {
    if (!mask[v]) return;
    Series s{std::vector<double>(static_cast<std::size_t>(vol.nt())), vol.tr_seconds()};
    for (std::int64_t t = 0; t < vol.nt(); ++t) s.values[static_cast<std::size_t>(t)] = vol.at(static_cast<std::int64_t>(v), t);
    m.values[v] = alff(s, band, fft);
  });
  return m;
}

/// Separable Gaussian smoothing, sigma = FWHM / 2.3548 per axis, kernel truncated at
/// 3 sigma and renormalized where it is cut by the grid edge.
inline Volume4D gaussian_smooth(const Volume4D& vol, const std::array<double, 3>& fwhm_mm = {4, 4, 4}) {
  auto out = vol;
  const auto& d = vol.dims();
  const std::array<std::int64_t, 3> n{d.nx, d.ny, d.nz};
  const std::array<std::int64_t, 3> stride{1, d.nx, d.nx * d.ny};
  for (int axis = 0; axis < 3; ++axis) {
    const double sigma = fwhm_mm[static_cast<std::size_t>(axis)] / 2.3548 / vol.voxel_size_mm()[static_cast<std::size_t>(axis)];
    if (!(sigma > 0)) continue;
    const auto radius = static_cast<std::int64_t>(std::ceil(3 * sigma));
    std::vector<double> w(static_cast<std::size_t>(2 * radius + 1));
    for (std::int64_t r = -radius; r <= radius; ++r)
      w[static_cast<std::size_t>(r + radius)] = std::exp(-0.5 * static_cast<double>(r * r) / (sigma * sigma));
    const auto src = out;
    const auto len = n[static_cast<std::size_t>(axis)], st = stride[static_cast<std::size_t>(axis)];
    parallel_for(static_cast<std::size_t>(vol.nt()), [&](std::size_t t) {
      for (std::int64_t v = 0; v < vol.voxels(); ++v) {
        const auto pos = (v / st) % len;
        double acc = 0, norm = 0;
        for (std::int64_t r = -radius; r <= radius; ++r) {
          const auto q = pos + r;
          if (q < 0 || q >= len) continue;
          const double wt = w[static_cast<std::size_t>(r + radius)];
          acc += wt * src.at(v + r * st, static_cast<std::int64_t>(t));
          norm += wt;
        }
        out.at(v, static_cast<std::int64_t>(t)) = static_cast<float>(acc / norm);
      }
    });
  }
  return out;
}

}  // namespace eak
