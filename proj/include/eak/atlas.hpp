#pragma once

// Emotion atlases: characteristic sub-ROIs plus voxels recruited by functional
// connectivity, their JSON form, and per-unit series extraction.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/blocks.hpp"
#include "eak/error.hpp"
#include "eak/features.hpp"
#include "eak/io.hpp"
#include "eak/parallel.hpp"
#include "eak/volume.hpp"

namespace eak {

/// Pearson correlation; nullopt when either series has zero variance.
inline std::optional<double> pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) fail(ErrorKind::DimensionMismatch, "correlated series differ in length");
  if (a.size() < 2) return std::nullopt;
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = a[i] - ma, db = b[i] - mb;
    sab += da * db;
    saa += da * da;
    sbb += db * db;
  }
  if (!(saa > 0) || !(sbb > 0)) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

struct SubRoi {
  std::int32_t parent_label = 0;
  std::vector<std::int64_t> voxels;  // row-major indices
};

inline std::vector<SubRoi> sub_rois_from_map(const std::map<std::int32_t, std::vector<std::int64_t>>& m) {
  std::vector<SubRoi> out;
  for (const auto& [label, voxels] : m) out.push_back({label, voxels});
  return out;
}

struct ReferenceOptions {
  /// Append each block's normalized rest window after its stimulus window.
  bool include_rest = false;
};

/// Concatenation over `blocks` of the unit's Min-Max normalized stimulus window
/// (and rest window when requested), in block order.
inline std::vector<double> reference_series(const std::vector<Block>& blocks, const VolumeLookup& volumes,
                                            const Unit& unit, const ReferenceOptions& opts = {}) {
  std::vector<double> out;
  for (const auto& b : blocks) {
    const auto& vol = volumes(b.subject_id);
    auto append = [&](const std::vector<std::int64_t>& times) {
      const auto n = minmax_normalize(Series{unit_samples(vol, unit, times), 1.0});
      out.insert(out.end(), n.values.begin(), n.values.end());
    };
    append(b.stim_volumes);
    if (opts.include_rest) append(b.rest_volumes);
  }
  return out;
}

struct FcHit {
  std::int64_t voxel = 0;
  std::int32_t parent_label = 0;  // the voxel's own region
  std::size_t best_sub_roi = 0;   // index into the sub-ROI list
  double best_r = 0;
};

struct FcExpansion {
  std::vector<FcHit> hits;  // row-major voxel order
  std::int64_t degenerate = 0;
  std::int64_t screened = 0;
};

/// Keeps candidate i when max_j r(candidate_i, reference_j) > threshold (strict),
/// attributing it to the reference with the largest r (first one on ties).
/// Candidates with zero variance are counted as degenerate and skipped.
inline FcExpansion fc_screen(const std::vector<std::vector<double>>& candidates, std::span<const std::int64_t> ids,
                             std::span<const std::int32_t> parents, const std::vector<std::vector<double>>& references,
                             double threshold) {
  if (references.empty()) fail(ErrorKind::Config, "FC expansion needs at least one sub-ROI");
  if (!(threshold >= -1 && threshold <= 1)) fail(ErrorKind::Config, "FC threshold must lie in [-1, 1]");
  const std::size_t n = candidates.size();
  std::vector<std::optional<FcHit>> slot(n);
  std::vector<std::uint8_t> degenerate(n, 0);
  parallel_for(n, [&](std::size_t i) {
    std::optional<double> best;
    std::size_t arg = 0;
    for (std::size_t j = 0; j < references.size(); ++j) {
      const auto r = pearson(candidates[i], references[j]);
      if (!r) {
        if (!pearson(candidates[i], candidates[i])) {
          degenerate[i] = 1;
          return;
        }
        continue;
      }
      if (!best || *r > *best) {
        best = r;
        arg = j;
      }
    }
    if (best && *best > threshold) slot[i] = FcHit{ids[i], parents[i], arg, *best};
  });
  FcExpansion out;
  out.screened = static_cast<std::int64_t>(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (degenerate[i]) ++out.degenerate;
    if (slot[i]) out.hits.push_back(*slot[i]);
  }
  return out;
}

/// Screens every labelled voxel outside the characteristic regions against the
/// sub-ROI reference series.
inline FcExpansion fc_expand(const std::vector<Block>& blocks, const VolumeLookup& volumes,
                             const std::vector<SubRoi>& sub_rois, const Parcellation& parc, double threshold,
                             const ReferenceOptions& opts = {}) {
  if (sub_rois.empty()) fail(ErrorKind::Config, "FC expansion needs at least one sub-ROI");
  if (blocks.empty()) fail(ErrorKind::Config, "FC expansion needs at least one block");
  std::set<std::int32_t> characteristic;
  for (const auto& s : sub_rois) characteristic.insert(s.parent_label);

  std::vector<std::vector<double>> refs(sub_rois.size());
  parallel_for(sub_rois.size(), [&](std::size_t j) {
    refs[j] = reference_series(blocks, volumes, Unit{sub_rois[j].parent_label, sub_rois[j].voxels}, opts);
  });

  std::vector<std::int64_t> ids;
  std::vector<std::int32_t> parents;
  for (std::int64_t v = 0; v < parc.dims().voxels(); ++v) {
    const auto l = parc.label_at(v);
    if (l == 0 || characteristic.contains(l)) continue;
    ids.push_back(v);
    parents.push_back(l);
  }
  std::vector<std::vector<double>> series(ids.size());
  parallel_for(ids.size(), [&](std::size_t i) { series[i] = reference_series(blocks, volumes, Unit{ids[i], {ids[i]}}, opts); });
  return fc_screen(series, ids, parents, refs, threshold);
}

enum class Provenance { sub_roi, fc_expanded };

struct AtlasUnit {
  std::int32_t parent_label = 0;
  Provenance provenance = Provenance::sub_roi;
  std::vector<GridIndex> voxels;
  friend bool operator==(const AtlasUnit&, const AtlasUnit&) = default;
};

struct AtlasSpec {
  std::string name;
  double fc_threshold = 0.95;
  std::string parcellation_digest;
  std::optional<Dims3> dims;
  std::vector<AtlasUnit> units;
  nlohmann::json construction = nlohmann::json::object();  // seeds, schedules

  std::size_t voxel_count() const {
    std::size_t n = 0;
    for (const auto& u : units) n += u.voxels.size();
    return n;
  }
  /// Distinct parent regions, which is also the unit count.
  std::size_t region_count() const {
    std::set<std::int32_t> s;
    for (const auto& u : units) s.insert(u.parent_label);
    return s.size();
  }
  friend bool operator==(const AtlasSpec&, const AtlasSpec&) = default;
};

/// One unit per sub-ROI, then one unit per parent region of the expanded voxels
/// (ascending label).
inline AtlasSpec build_atlas(const std::string& name, const std::vector<SubRoi>& sub_rois,
                             const std::vector<FcHit>& expanded, const Parcellation& parc, double fc_threshold,
                             nlohmann::json construction = nlohmann::json::object()) {
  const auto& d = parc.dims();
  AtlasSpec a{name, fc_threshold, parc.digest(), d, {}, std::move(construction)};
  std::set<std::int64_t> seen;
  std::set<std::int32_t> characteristic;
  auto claim = [&](std::int64_t v) {
    if (v < 0 || v >= d.voxels()) fail(ErrorKind::OutOfBounds, "atlas voxel outside grid");
    if (!seen.insert(v).second) fail(ErrorKind::OverlapError, "voxel " + std::to_string(v) + " assigned twice");
  };
  for (const auto& s : sub_rois) {
    AtlasUnit u{s.parent_label, Provenance::sub_roi, {}};
    characteristic.insert(s.parent_label);
    auto voxels = s.voxels;
    std::sort(voxels.begin(), voxels.end());
    for (auto v : voxels) {
      claim(v);
      u.voxels.push_back(d.unlinear(v));
    }
    a.units.push_back(std::move(u));
  }
  std::map<std::int32_t, std::vector<std::int64_t>> groups;
  for (const auto& h : expanded) {
    if (characteristic.contains(h.parent_label))
      fail(ErrorKind::OverlapError, "expanded voxel lies in characteristic region " + std::to_string(h.parent_label));
    groups[h.parent_label].push_back(h.voxel);
  }
  for (auto& [label, voxels] : groups) {
    std::sort(voxels.begin(), voxels.end());
    AtlasUnit u{label, Provenance::fc_expanded, {}};
    for (auto v : voxels) {
      claim(v);
      u.voxels.push_back(d.unlinear(v));
    }
    a.units.push_back(std::move(u));
  }
  return a;
}

inline nlohmann::json atlas_to_json(const AtlasSpec& a) {
  nlohmann::json j;
  j["name"] = a.name;
  j["fc_threshold"] = a.fc_threshold;
  j["parcellation_digest"] = a.parcellation_digest;
  if (a.dims) j["dims"] = {a.dims->nx, a.dims->ny, a.dims->nz};
  j["construction"] = a.construction;
  j["units"] = nlohmann::json::array();
  for (const auto& u : a.units) {
    nlohmann::json vox = nlohmann::json::array();
    for (const auto& g : u.voxels) vox.push_back({g.x, g.y, g.z});
    j["units"].push_back({{"parent_label", u.parent_label},
                          {"provenance", u.provenance == Provenance::sub_roi ? "sub_roi" : "fc_expanded"},
                          {"voxels", std::move(vox)}});
  }
  return j;
}

inline AtlasSpec atlas_from_json(const nlohmann::json& j) {
  try {
    AtlasSpec a;
    a.name = j.at("name").get<std::string>();
    a.fc_threshold = j.at("fc_threshold").get<double>();
    a.parcellation_digest = j.at("parcellation_digest").get<std::string>();
    if (j.contains("dims")) {
      const auto& d = j.at("dims");
      a.dims = Dims3{d.at(0).get<std::int64_t>(), d.at(1).get<std::int64_t>(), d.at(2).get<std::int64_t>()};
    }
    if (j.contains("construction")) a.construction = j.at("construction");
    for (const auto& ju : j.at("units")) {
      AtlasUnit u;
      u.parent_label = ju.at("parent_label").get<std::int32_t>();
      const auto prov = ju.at("provenance").get<std::string>();
      if (prov == "sub_roi") u.provenance = Provenance::sub_roi;
      else if (prov == "fc_expanded") u.provenance = Provenance::fc_expanded;
      else fail(ErrorKind::SchemaError, "unknown provenance '" + prov + "'");
      for (const auto& v : ju.at("voxels")) {
        if (!v.is_array() || v.size() != 3) fail(ErrorKind::SchemaError, "voxel entries must be [x, y, z]");
        u.voxels.push_back({v[0].get<std::int64_t>(), v[1].get<std::int64_t>(), v[2].get<std::int64_t>()});
      }
      a.units.push_back(std::move(u));
    }
    return a;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("atlas: ") + e.what());
  }
}

inline void check_atlas(const AtlasSpec& a) {
  std::set<GridIndex> seen;
  for (const auto& u : a.units)
    for (const auto& g : u.voxels) {
      if (a.dims && !a.dims->contains(g)) fail(ErrorKind::SchemaError, "atlas voxel outside grid");
      if (!seen.insert(g).second) fail(ErrorKind::OverlapError, "atlas units overlap");
    }
}

inline void save_atlas(const AtlasSpec& a, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Config, "cannot write " + path.string());
  out << atlas_to_json(a).dump(1) << '\n';
}

/// Loads and validates an atlas; with `parc` the digest must match and the grid is taken from it.
inline AtlasSpec load_atlas(const std::filesystem::path& path, const Parcellation* parc = nullptr) {
  auto a = atlas_from_json(detail::read_json(path));
  if (parc) {
    if (a.parcellation_digest != parc->digest())
      fail(ErrorKind::DigestMismatch, "atlas was built on a different parcellation");
    if (a.dims && !(*a.dims == parc->dims())) fail(ErrorKind::DimensionMismatch, "atlas grid differs from parcellation");
    a.dims = parc->dims();
  }
  check_atlas(a);
  return a;
}

/// Mean series of each unit, voxels visited in stored order.
inline std::vector<Series> atlas_series(const Volume4D& vol, const AtlasSpec& a) {
  if (a.dims && !(*a.dims == vol.dims())) fail(ErrorKind::DimensionMismatch, "atlas grid differs from volume grid");
  std::vector<Series> out(a.units.size());
  parallel_for(a.units.size(), [&](std::size_t i) {
    std::vector<std::int64_t> idx;
    for (const auto& g : a.units[i].voxels) {
      if (!vol.dims().contains(g)) fail(ErrorKind::DimensionMismatch, "atlas voxel outside volume grid");
      idx.push_back(vol.dims().linear(g));
    }
    out[i] = mean_series(vol, idx);
  });
  return out;
}

}  // namespace eak
