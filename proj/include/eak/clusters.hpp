#pragma once

// Connected components of a significance mask with peak reporting.

#include <algorithm>
#include <array>
#include <iomanip>
#include <map>
#include <sstream>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/volume.hpp"

namespace eak {

enum class Connectivity { faces = 6, edges = 18, corners = 26 };

inline Connectivity parse_connectivity(int n) {
  switch (n) {
    case 6: return Connectivity::faces;
    case 18: return Connectivity::edges;
    case 26: return Connectivity::corners;
    default: fail(ErrorKind::Config, "connectivity must be 6, 18 or 26");
  }
}

struct Cluster {
  std::vector<std::int64_t> voxels;  // row-major order
  std::int64_t n_voxels = 0;
  double size_mm3 = 0;
  GridIndex peak;
  WorldCoord peak_world;
  double peak_intensity = 0;  // signed value at the voxel of largest |value|
  std::vector<std::int32_t> region_labels;
};

struct ClusterReport {
  std::vector<Cluster> clusters;
  Connectivity connectivity = Connectivity::corners;
  double q = 0;
  std::string intensity_label = "peak_t";
};

namespace detail {

class DisjointSet {
 public:
  explicit DisjointSet(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];
      x = parent_[x];
    }
    return x;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return;
    if (b < a) std::swap(a, b);
    parent_[b] = a;  // root is always the smallest index
  }

 private:
  std::vector<std::size_t> parent_;
};

inline std::vector<std::array<int, 3>> neighbour_offsets(Connectivity c) {
  std::vector<std::array<int, 3>> out;
  for (int dz = -1; dz <= 1; ++dz)
    for (int dy = -1; dy <= 1; ++dy)
      for (int dx = -1; dx <= 1; ++dx) {
        const int order = std::abs(dx) + std::abs(dy) + std::abs(dz);
        if (order == 0) continue;
        if (c == Connectivity::faces && order > 1) continue;
        if (c == Connectivity::edges && order > 2) continue;
        out.push_back({dx, dy, dz});
      }
  return out;
}

}  // namespace detail

/// Components of `mask` under `connectivity`. Clusters are ordered by size
/// (largest first), then |peak| (largest first), then first voxel index.
/// `parc` may be null; when given its grid must match.
inline ClusterReport extract_clusters(std::span<const std::uint8_t> mask, std::span<const double> values, const Dims3& dims,
                                      const Parcellation* parc, const Affine& affine, double voxel_volume_mm3,
                                      Connectivity connectivity = Connectivity::corners) {
  if (static_cast<std::int64_t>(mask.size()) != dims.voxels() || values.size() != mask.size())
    fail(ErrorKind::DimensionMismatch, "mask/value grid mismatch");
  if (parc && !(parc->dims() == dims)) fail(ErrorKind::DimensionMismatch, "parcellation grid mismatch");
  const auto offsets = detail::neighbour_offsets(connectivity);
  detail::DisjointSet ds(mask.size());
  for (std::int64_t v = 0; v < dims.voxels(); ++v) {
    if (!mask[static_cast<std::size_t>(v)]) continue;
    const auto g = dims.unlinear(v);
    for (const auto& o : offsets) {
      const GridIndex n{g.x + o[0], g.y + o[1], g.z + o[2]};
      if (!dims.contains(n)) continue;
      const auto w = dims.linear(n);
      if (w < v && mask[static_cast<std::size_t>(w)]) ds.unite(static_cast<std::size_t>(v), static_cast<std::size_t>(w));
    }
  }
  std::map<std::size_t, Cluster> by_root;
  for (std::int64_t v = 0; v < dims.voxels(); ++v)
    if (mask[static_cast<std::size_t>(v)]) by_root[ds.find(static_cast<std::size_t>(v))].voxels.push_back(v);

  ClusterReport report;
  report.connectivity = connectivity;
  for (auto& [root, c] : by_root) {
    c.n_voxels = static_cast<std::int64_t>(c.voxels.size());
    c.size_mm3 = static_cast<double>(c.n_voxels) * voxel_volume_mm3;
    std::int64_t peak = c.voxels.front();
    for (auto v : c.voxels)
      if (std::abs(values[static_cast<std::size_t>(v)]) > std::abs(values[static_cast<std::size_t>(peak)])) peak = v;
    c.peak = dims.unlinear(peak);
    c.peak_world = grid_to_world(c.peak, affine);
    c.peak_intensity = values[static_cast<std::size_t>(peak)];
    if (parc) {
      std::set<std::int32_t> labels;
      for (auto v : c.voxels)
        if (auto l = parc->label_at(v); l != 0) labels.insert(l);
      c.region_labels.assign(labels.begin(), labels.end());
    }
    report.clusters.push_back(std::move(c));
  }
  std::stable_sort(report.clusters.begin(), report.clusters.end(), [](const Cluster& a, const Cluster& b) {
    if (a.n_voxels != b.n_voxels) return a.n_voxels > b.n_voxels;
    if (std::abs(a.peak_intensity) != std::abs(b.peak_intensity))
      return std::abs(a.peak_intensity) > std::abs(b.peak_intensity);
    return a.voxels.front() < b.voxels.front();
  });
  return report;
}

inline nlohmann::json cluster_report_to_json(const ClusterReport& r, const Parcellation* parc = nullptr) {
  nlohmann::json j;
  j["connectivity"] = static_cast<int>(r.connectivity);
  j["q"] = r.q;
  j["intensity"] = r.intensity_label;
  j["clusters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < r.clusters.size(); ++i) {
    const auto& c = r.clusters[i];
    nlohmann::json names = nlohmann::json::array();
    if (parc)
      for (auto l : c.region_labels) names.push_back(parc->names().at(l));
    j["clusters"].push_back({{"cluster", i + 1},
                             {"n_voxels", c.n_voxels},
                             {"size_mm3", c.size_mm3},
                             {"peak_grid", {c.peak.x, c.peak.y, c.peak.z}},
                             {"peak_mni", {c.peak_world.x_mm, c.peak_world.y_mm, c.peak_world.z_mm}},
                             {"region_labels", c.region_labels},
                             {"region_names", names},
                             {r.intensity_label, c.peak_intensity},
                             {"voxels", c.voxels}});
  }
  return j;
}

/// Table layout: cluster, voxels, size, peak MNI, regions, signed peak value.
inline std::string cluster_report_csv(const ClusterReport& r, const Parcellation* parc = nullptr) {
  std::ostringstream out;
  out << "cluster,n_voxels,size_mm3,peak_x_mm,peak_y_mm,peak_z_mm,regions," << r.intensity_label << '\n';
  for (std::size_t i = 0; i < r.clusters.size(); ++i) {
    const auto& c = r.clusters[i];
    std::string regions;
    for (auto l : c.region_labels) {
      if (!regions.empty()) regions += ';';
      regions += parc ? parc->names().at(l) : std::to_string(l);
    }
    out << i + 1 << ',' << c.n_voxels << ',' << c.size_mm3 << ',' << c.peak_world.x_mm << ',' << c.peak_world.y_mm
        << ',' << c.peak_world.z_mm << ',' << regions << ',' << std::setprecision(6) << c.peak_intensity
        << std::setprecision(6) << '\n';
  }
  return out.str();
}

}  // namespace eak
