#pragma once

// Block features: each (unit, block, phase) window is Min-Max normalized over
// its own samples and reduced to the mean. One matrix row per (block, phase);
// stimulus rows carry label +1, rest rows -1.

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/blocks.hpp"
#include "eak/error.hpp"
#include "eak/parallel.hpp"
#include "eak/volume.hpp"

namespace eak {

using FeatureId = std::int64_t;

enum class Phase { stim, rest };

struct SampleId {
  std::string subject;
  int block = 0;
  Phase phase = Phase::stim;
  friend bool operator==(const SampleId&, const SampleId&) = default;
};

/// Dense row-major samples x features matrix with +1/-1 labels.
class FeatureMatrix {
 public:
  FeatureMatrix() = default;
  FeatureMatrix(std::size_t rows, std::size_t cols)
      : rows_(rows), cols_(cols), values_(rows * cols), labels_(rows, 1), sample_ids_(rows) {
    feature_ids_.resize(cols);
    for (std::size_t j = 0; j < cols; ++j) feature_ids_[j] = static_cast<FeatureId>(j);
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double operator()(std::size_t r, std::size_t c) const { return values_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return values_[r * cols_ + c]; }
  std::span<const double> row(std::size_t r) const { return {values_.data() + r * cols_, cols_}; }
  std::span<const double> values() const { return values_; }

  std::vector<int>& labels() { return labels_; }
  const std::vector<int>& labels() const { return labels_; }
  std::vector<FeatureId>& feature_ids() { return feature_ids_; }
  const std::vector<FeatureId>& feature_ids() const { return feature_ids_; }
  std::vector<SampleId>& sample_ids() { return sample_ids_; }
  const std::vector<SampleId>& sample_ids() const { return sample_ids_; }

  std::size_t count_label(int y) const { return static_cast<std::size_t>(std::count(labels_.begin(), labels_.end(), y)); }

  FeatureMatrix select_rows(std::span<const std::size_t> rows) const {
    FeatureMatrix out(rows.size(), cols_);
    out.feature_ids_ = feature_ids_;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      std::copy_n(values_.begin() + static_cast<std::ptrdiff_t>(rows[i] * cols_), cols_,
                  out.values_.begin() + static_cast<std::ptrdiff_t>(i * cols_));
      out.labels_[i] = labels_[rows[i]];
      out.sample_ids_[i] = sample_ids_[rows[i]];
    }
    return out;
  }

  FeatureMatrix select_cols(std::span<const std::size_t> cols) const {
    FeatureMatrix out(rows_, cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j) out.feature_ids_[j] = feature_ids_[cols[j]];
    for (std::size_t r = 0; r < rows_; ++r)
      for (std::size_t j = 0; j < cols.size(); ++j) out(r, j) = (*this)(r, cols[j]);
    out.labels_ = labels_;
    out.sample_ids_ = sample_ids_;
    return out;
  }

  friend bool operator==(const FeatureMatrix&, const FeatureMatrix&) = default;

 private:
  std::size_t rows_ = 0, cols_ = 0;
  std::vector<double> values_;
  std::vector<int> labels_;
  std::vector<FeatureId> feature_ids_;
  std::vector<SampleId> sample_ids_;
};

/// (v - min) / (max - min); a constant input maps to zeros.
inline Series minmax_normalize(const Series& s) {
  if (s.values.empty()) fail(ErrorKind::Config, "cannot normalize an empty series");
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  const double min = *lo, range = *hi - *lo;
  Series out{std::vector<double>(s.size(), 0.0), s.sampling_interval_s};
  if (range > 0)
    for (std::size_t i = 0; i < s.size(); ++i) out.values[i] = std::clamp((s.values[i] - min) / range, 0.0, 1.0);
  return out;
}

/// Mean of the Min-Max normalized window.
inline double window_feature(std::span<const double> window) {
  const auto n = minmax_normalize(Series{{window.begin(), window.end()}, 1.0});
  double acc = 0;
  for (double v : n.values) acc += v;
  return acc / static_cast<double>(n.size());
}

/// A feature unit: an ROI (all its voxels) or a single voxel.
struct Unit {
  FeatureId id = 0;
  std::vector<std::int64_t> voxels;
};

inline std::vector<Unit> roi_units(const Parcellation& parc, std::span<const std::int32_t> labels) {
  std::vector<Unit> out;
  out.reserve(labels.size());
  for (auto l : labels) out.push_back({l, parc.voxels_of(l)});
  return out;
}

inline std::vector<Unit> roi_units(const Parcellation& parc) {
  const auto labels = parc.region_labels();
  return roi_units(parc, labels);
}

/// One unit per voxel of the region; feature id is the row-major voxel index.
inline std::vector<Unit> voxel_units(const Parcellation& parc, std::int32_t label) {
  std::vector<Unit> out;
  for (auto v : parc.voxels_of(label)) out.push_back({v, {v}});
  return out;
}

/// Unit mean at the listed timepoints, accumulated in voxel order.
inline std::vector<double> unit_samples(const Volume4D& vol, const Unit& unit, std::span<const std::int64_t> times) {
  if (unit.voxels.empty()) fail(ErrorKind::EmptyRegion, "unit " + std::to_string(unit.id) + " has no voxels");
  std::vector<double> out(times.size());
  const double inv = 1.0 / static_cast<double>(unit.voxels.size());
  for (std::size_t i = 0; i < times.size(); ++i) {
    if (times[i] < 0 || times[i] >= vol.nt()) fail(ErrorKind::OutOfBounds, "timepoint outside run");
    double acc = 0;
    for (auto v : unit.voxels) {
      if (v < 0 || v >= vol.voxels()) fail(ErrorKind::OutOfBounds, "voxel outside grid");
      acc += vol.at(v, times[i]);
    }
    out[i] = acc * inv;
  }
  return out;
}

inline double block_feature(const Volume4D& vol, const Unit& unit, const Block& block, Phase phase) {
  return window_feature(unit_samples(vol, unit, phase == Phase::stim ? block.stim_volumes : block.rest_volumes));
}

/// Maps a subject id to its volume.
using VolumeLookup = std::function<const Volume4D&(const std::string&)>;

struct FeatureOptions {
  /// Normalize stimulus and rest windows with one shared min/max instead of independently.
  bool shared_phase_normalization = false;
};

/// Rows: (block 0 stim, block 0 rest, block 1 stim, ...). Columns follow `units`.
inline FeatureMatrix assemble_matrix(const std::vector<Block>& blocks, const std::vector<Unit>& units,
                                     const VolumeLookup& volumes, const FeatureOptions& opts = {}) {
  if (blocks.empty()) fail(ErrorKind::Config, "no blocks to assemble");
  if (units.empty()) fail(ErrorKind::Config, "no feature units");
  FeatureMatrix X(2 * blocks.size(), units.size());
  for (std::size_t j = 0; j < units.size(); ++j) X.feature_ids()[j] = units[j].id;
  {
    auto ids = X.feature_ids();
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) fail(ErrorKind::Config, "duplicate feature ids");
  }
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    X.labels()[2 * b] = +1;
    X.labels()[2 * b + 1] = -1;
    X.sample_ids()[2 * b] = {blocks[b].subject_id, blocks[b].block_index, Phase::stim};
    X.sample_ids()[2 * b + 1] = {blocks[b].subject_id, blocks[b].block_index, Phase::rest};
  }
  parallel_for(blocks.size(), [&](std::size_t b) {
    const auto& blk = blocks[b];
    const Volume4D& vol = volumes(blk.subject_id);
    for (std::size_t j = 0; j < units.size(); ++j) {
      if (!opts.shared_phase_normalization) {
        X(2 * b, j) = block_feature(vol, units[j], blk, Phase::stim);
        X(2 * b + 1, j) = block_feature(vol, units[j], blk, Phase::rest);
        continue;
      }
      const auto stim = unit_samples(vol, units[j], blk.stim_volumes);
      const auto rest = unit_samples(vol, units[j], blk.rest_volumes);
      std::vector<double> both(stim);
      both.insert(both.end(), rest.begin(), rest.end());
      const auto n = minmax_normalize(Series{both, 1.0}).values;
      double s = 0, r = 0;
      for (std::size_t i = 0; i < stim.size(); ++i) s += n[i];
      for (std::size_t i = 0; i < rest.size(); ++i) r += n[stim.size() + i];
      X(2 * b, j) = s / static_cast<double>(stim.size());
      X(2 * b + 1, j) = r / static_cast<double>(rest.size());
    }
  });
  return X;
}

// CSV: "sample,label,<feature ids>" header; one row per sample.

inline void write_matrix_csv(const FeatureMatrix& X, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Config, "cannot write " + path.string());
  out << "sample,label";
  for (auto id : X.feature_ids()) out << ',' << id;
  out << '\n' << std::setprecision(std::numeric_limits<double>::max_digits10);
  for (std::size_t r = 0; r < X.rows(); ++r) {
    const auto& s = X.sample_ids()[r];
    out << s.subject << ':' << s.block << ':' << (s.phase == Phase::stim ? "stim" : "rest") << ',' << X.labels()[r];
    for (std::size_t c = 0; c < X.cols(); ++c) out << ',' << X(r, c);
    out << '\n';
  }
}

inline FeatureMatrix read_matrix_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open " + path.string());
  auto split = [](const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    return cells;
  };
  std::string line;
  if (!std::getline(in, line)) fail(ErrorKind::SchemaError, "empty matrix file");
  const auto header = split(line);
  if (header.size() < 3 || header[0] != "sample" || header[1] != "label")
    fail(ErrorKind::SchemaError, "matrix header must start with sample,label");
  std::vector<FeatureId> ids;
  for (std::size_t i = 2; i < header.size(); ++i) ids.push_back(std::stoll(header[i]));
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line))
    if (!line.empty()) rows.push_back(split(line));
  FeatureMatrix X(rows.size(), ids.size());
  X.feature_ids() = ids;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    if (rows[r].size() != header.size()) fail(ErrorKind::SchemaError, "ragged matrix row " + std::to_string(r));
    const auto& sid = rows[r][0];
    const auto c1 = sid.find(':'), c2 = sid.rfind(':');
    if (c1 != std::string::npos && c2 != c1)
      X.sample_ids()[r] = {sid.substr(0, c1), std::stoi(sid.substr(c1 + 1, c2 - c1 - 1)),
                           sid.substr(c2 + 1) == "rest" ? Phase::rest : Phase::stim};
    else
      X.sample_ids()[r] = {sid, 0, Phase::stim};
    X.labels()[r] = std::stoi(rows[r][1]);
    if (X.labels()[r] != 1 && X.labels()[r] != -1) fail(ErrorKind::SchemaError, "labels must be +1 or -1");
    for (std::size_t c = 0; c < ids.size(); ++c) {
      const auto& cell = rows[r][c + 2];
      double v = 0;
      const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), v);
      if (res.ec != std::errc() || !std::isfinite(v)) fail(ErrorKind::NonFinite, "bad matrix value '" + cell + "'");
      X(r, c) = v;
    }
  }
  return X;
}

/// Binary cache: JSON header file plus float32 payload (row-major values).
inline void write_matrix_cache(const FeatureMatrix& X, const std::filesystem::path& header_path) {
  auto payload = header_path;
  payload.replace_extension(".f32");
  nlohmann::json h;
  h["rows"] = X.rows();
  h["cols"] = X.cols();
  h["labels"] = X.labels();
  h["feature_ids"] = X.feature_ids();
  h["data_file"] = payload.filename().string();
  std::ofstream(header_path) << h.dump() << '\n';
  std::vector<float> v(X.values().begin(), X.values().end());
  std::ofstream out(payload, std::ios::binary);
  out.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(float)));
}

}  // namespace eak
