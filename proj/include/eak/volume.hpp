#pragma once

// Volume4D, Parcellation, Series and the extraction operations over them.
//
// Storage is x-fastest: index(x,y,z,t) = x + nx*(y + ny*(z + nz*t)).

#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "eak/error.hpp"

namespace eak {

struct GridIndex {
  std::int64_t x = 0, y = 0, z = 0;
  friend bool operator==(const GridIndex&, const GridIndex&) = default;
  friend auto operator<=>(const GridIndex&, const GridIndex&) = default;
};

struct WorldCoord {
  double x_mm = 0, y_mm = 0, z_mm = 0;
};

struct Dims3 {
  std::int64_t nx = 1, ny = 1, nz = 1;
  std::int64_t voxels() const { return nx * ny * nz; }
  bool contains(const GridIndex& g) const {
    return g.x >= 0 && g.y >= 0 && g.z >= 0 && g.x < nx && g.y < ny && g.z < nz;
  }
  std::int64_t linear(const GridIndex& g) const { return g.x + nx * (g.y + ny * g.z); }
  GridIndex unlinear(std::int64_t i) const { return {i % nx, (i / nx) % ny, i / (nx * ny)}; }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Grid index to world (mm) transform, row-major 4x4 with last row (0,0,0,1).
class Affine {
 public:
  Affine() : m_{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1} {}
  explicit Affine(const std::array<double, 16>& row_major) : m_(row_major) {}

  static Affine scaled(double sx, double sy, double sz, double tx = 0, double ty = 0, double tz = 0) {
    return Affine({sx, 0, 0, tx, 0, sy, 0, ty, 0, 0, sz, tz, 0, 0, 0, 1});
  }

  const std::array<double, 16>& row_major() const { return m_; }
  double operator()(int r, int c) const { return m_[static_cast<std::size_t>(4 * r + c)]; }

  double det3() const {
    const auto& a = *this;
    return a(0, 0) * (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) -
           a(0, 1) * (a(1, 0) * a(2, 2) - a(1, 2) * a(2, 0)) +
           a(0, 2) * (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0));
  }

  bool invertible() const {
    const double d = det3();
    return std::isfinite(d) && std::abs(d) > 1e-12;
  }

  WorldCoord apply(double x, double y, double z) const {
    const auto& a = *this;
    return {a(0, 0) * x + a(0, 1) * y + a(0, 2) * z + a(0, 3),
            a(1, 0) * x + a(1, 1) * y + a(1, 2) * z + a(1, 3),
            a(2, 0) * x + a(2, 1) * y + a(2, 2) * z + a(2, 3)};
  }

  Affine inverse() const {
    if (!invertible()) fail(ErrorKind::Numerical, "affine 3x3 block is singular");
    const auto& a = *this;
    const double d = det3();
    std::array<double, 9> inv{
        (a(1, 1) * a(2, 2) - a(1, 2) * a(2, 1)) / d, (a(0, 2) * a(2, 1) - a(0, 1) * a(2, 2)) / d,
        (a(0, 1) * a(1, 2) - a(0, 2) * a(1, 1)) / d, (a(1, 2) * a(2, 0) - a(1, 0) * a(2, 2)) / d,
        (a(0, 0) * a(2, 2) - a(0, 2) * a(2, 0)) / d, (a(0, 2) * a(1, 0) - a(0, 0) * a(1, 2)) / d,
        (a(1, 0) * a(2, 1) - a(1, 1) * a(2, 0)) / d, (a(0, 1) * a(2, 0) - a(0, 0) * a(2, 1)) / d,
        (a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0)) / d};
    std::array<double, 16> out{};
    for (int r = 0; r < 3; ++r) {
      double t = 0;
      for (int c = 0; c < 3; ++c) {
        out[static_cast<std::size_t>(4 * r + c)] = inv[static_cast<std::size_t>(3 * r + c)];
        t -= inv[static_cast<std::size_t>(3 * r + c)] * a(c, 3);
      }
      out[static_cast<std::size_t>(4 * r + 3)] = t;
    }
    out[15] = 1;
    return Affine(out);
  }

  friend bool operator==(const Affine&, const Affine&) = default;

 private:
  std::array<double, 16> m_;
};

inline WorldCoord grid_to_world(const GridIndex& g, const Affine& affine) {
  return affine.apply(static_cast<double>(g.x), static_cast<double>(g.y), static_cast<double>(g.z));
}

/// Continuous grid position of a world coordinate (inverse transform).
inline std::array<double, 3> world_to_grid(const WorldCoord& w, const Affine& affine) {
  const auto p = affine.inverse().apply(w.x_mm, w.y_mm, w.z_mm);
  return {p.x_mm, p.y_mm, p.z_mm};
}

struct Series {
  std::vector<double> values;
  double sampling_interval_s = 1.0;

  std::size_t size() const { return values.size(); }
  friend bool operator==(const Series&, const Series&) = default;
};

class Volume4D {
 public:
  Volume4D() = default;

  Volume4D(Dims3 dims, std::int64_t nt, std::vector<float> data, std::array<double, 3> voxel_size_mm,
           double tr_seconds, Affine affine)
      : dims_(dims),
        nt_(nt),
        data_(std::move(data)),
        voxel_size_(voxel_size_mm),
        tr_(tr_seconds),
        affine_(affine) {
    validate();
  }

  /// Zero-filled volume, convenient for generators and tests.
  static Volume4D zeros(Dims3 dims, std::int64_t nt, std::array<double, 3> voxel_size_mm = {3, 3, 3},
                        double tr_seconds = 2.0, Affine affine = Affine()) {
    return Volume4D(dims, nt,
                    std::vector<float>(static_cast<std::size_t>(std::max<std::int64_t>(dims.voxels() * nt, 0))),
                    voxel_size_mm, tr_seconds, affine);
  }

  const Dims3& dims() const { return dims_; }
  std::int64_t nt() const { return nt_; }
  std::int64_t voxels() const { return dims_.voxels(); }
  const std::array<double, 3>& voxel_size_mm() const { return voxel_size_; }
  double voxel_volume_mm3() const { return voxel_size_[0] * voxel_size_[1] * voxel_size_[2]; }
  double tr_seconds() const { return tr_; }
  const Affine& affine() const { return affine_; }
  std::span<const float> data() const { return data_; }
  std::span<float> mutable_data() { return data_; }

  float at(std::int64_t voxel, std::int64_t t) const {
    return data_[static_cast<std::size_t>(voxel + voxels() * t)];
  }
  float& at(std::int64_t voxel, std::int64_t t) { return data_[static_cast<std::size_t>(voxel + voxels() * t)]; }
  float at(const GridIndex& g, std::int64_t t) const { return at(dims_.linear(g), t); }

  friend bool operator==(const Volume4D&, const Volume4D&) = default;

 private:
  void validate() const {
    if (dims_.nx < 1 || dims_.ny < 1 || dims_.nz < 1 || nt_ < 1)
      fail(ErrorKind::DimensionMismatch, "all dims must be >= 1");
    if (static_cast<std::int64_t>(data_.size()) != dims_.voxels() * nt_)
      fail(ErrorKind::DimensionMismatch, "data length " + std::to_string(data_.size()) + " != nx*ny*nz*nt");
    for (double s : voxel_size_)
      if (!(s > 0) || !std::isfinite(s)) fail(ErrorKind::CorruptHeader, "voxel size must be positive");
    if (!(tr_ > 0) || !std::isfinite(tr_)) fail(ErrorKind::CorruptHeader, "tr_seconds must be positive");
    if (!affine_.invertible()) fail(ErrorKind::CorruptHeader, "affine is not invertible");
    for (float v : data_)
      if (!std::isfinite(v)) fail(ErrorKind::NonFinite, "volume contains NaN or Inf");
  }

  Dims3 dims_{};
  std::int64_t nt_ = 1;
  std::vector<float> data_ = std::vector<float>(1);
  std::array<double, 3> voxel_size_{1, 1, 1};
  double tr_ = 1.0;
  Affine affine_{};
};

class Parcellation {
 public:
  Parcellation() = default;

  Parcellation(Dims3 dims, std::vector<std::int32_t> labels, std::map<std::int32_t, std::string> names = {})
      : dims_(dims), labels_(std::move(labels)), names_(std::move(names)) {
    if (static_cast<std::int64_t>(labels_.size()) != dims_.voxels())
      fail(ErrorKind::DimensionMismatch, "label grid size does not match dims");
    for (auto l : labels_) {
      if (l < 0) fail(ErrorKind::NonIntegerLabels, "negative label");
      if (l != 0 && !names_.contains(l)) names_.emplace(l, "region_" + std::to_string(l));
    }
    names_.erase(0);
    // Names without voxels are dropped so every named label is a real region.
    std::map<std::int32_t, std::int64_t> counts;
    for (auto l : labels_)
      if (l != 0) ++counts[l];
    for (auto it = names_.begin(); it != names_.end();) {
      it = counts.contains(it->first) ? std::next(it) : names_.erase(it);
    }
  }

  const Dims3& dims() const { return dims_; }
  std::span<const std::int32_t> labels() const { return labels_; }
  std::int32_t label_at(std::int64_t voxel) const { return labels_[static_cast<std::size_t>(voxel)]; }
  const std::map<std::int32_t, std::string>& names() const { return names_; }
  bool has_label(std::int32_t l) const { return names_.contains(l); }

  /// Non-background labels, ascending.
  std::vector<std::int32_t> region_labels() const {
    std::vector<std::int32_t> out;
    out.reserve(names_.size());
    for (const auto& [l, _] : names_) out.push_back(l);
    return out;
  }

  /// Row-major voxel indices carrying `label`.
  std::vector<std::int64_t> voxels_of(std::int32_t label) const {
    if (!has_label(label)) fail(ErrorKind::UnknownLabel, "label " + std::to_string(label) + " not in parcellation");
    std::vector<std::int64_t> out;
    for (std::size_t i = 0; i < labels_.size(); ++i)
      if (labels_[i] == label) out.push_back(static_cast<std::int64_t>(i));
    return out;
  }

  /// FNV-1a 64 over dims and labels, hex encoded.
  std::string digest() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](std::uint64_t v) {
      for (int b = 0; b < 8; ++b) {
        h ^= (v >> (8 * b)) & 0xffU;
        h *= 0x100000001b3ULL;
      }
    };
    mix(static_cast<std::uint64_t>(dims_.nx));
    mix(static_cast<std::uint64_t>(dims_.ny));
    mix(static_cast<std::uint64_t>(dims_.nz));
    for (auto l : labels_) mix(static_cast<std::uint64_t>(static_cast<std::uint32_t>(l)));
    static constexpr char hex[] = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
      s[static_cast<std::size_t>(i)] = hex[h & 0xf];
      h >>= 4;
    }
    return s;
  }

  friend bool operator==(const Parcellation&, const Parcellation&) = default;

 private:
  Dims3 dims_{};
  std::vector<std::int32_t> labels_ = std::vector<std::int32_t>(1, 0);
  std::map<std::int32_t, std::string> names_;
};

inline void require_same_grid(const Volume4D& vol, const Parcellation& parc) {
  if (!(vol.dims() == parc.dims())) fail(ErrorKind::DimensionMismatch, "volume and parcellation grids differ");
}

/// Per-timepoint mean over the given voxels, accumulated in the order given.
inline Series mean_series(const Volume4D& vol, std::span<const std::int64_t> voxels) {
  if (voxels.empty()) fail(ErrorKind::EmptyRegion, "no voxels to average");
  Series s{std::vector<double>(static_cast<std::size_t>(vol.nt())), vol.tr_seconds()};
  const double inv = 1.0 / static_cast<double>(voxels.size());
  for (std::int64_t t = 0; t < vol.nt(); ++t) {
    double acc = 0;
    for (auto v : voxels) {
      if (v < 0 || v >= vol.voxels()) fail(ErrorKind::OutOfBounds, "voxel index outside grid");
      acc += vol.at(v, t);
    }
    s.values[static_cast<std::size_t>(t)] = acc * inv;
  }
  return s;
}

inline Series region_mean_series(const Volume4D& vol, const Parcellation& parc, std::int32_t label) {
  require_same_grid(vol, parc);
  const auto voxels = parc.voxels_of(label);
  return mean_series(vol, voxels);
}

inline Series voxel_series(const Volume4D& vol, const GridIndex& g) {
  if (!vol.dims().contains(g)) fail(ErrorKind::OutOfBounds, "grid index outside volume");
  const auto v = vol.dims().linear(g);
  Series s{std::vector<double>(static_cast<std::size_t>(vol.nt())), vol.tr_seconds()};
  for (std::int64_t t = 0; t < vol.nt(); ++t) s.values[static_cast<std::size_t>(t)] = vol.at(v, t);
  return s;
}

}  // namespace eak
