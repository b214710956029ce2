#pragma once

// Synthetic task and resting-state datasets with planted ground truth.
//
// Regions are contiguous row-major chunks: voxel v belongs to region
// 1 + floor(v * n_regions / n_voxels). Noise for subject s, voxel v is the
// stream CounterRng(derive_seed(seed, tag_s), v), one normal per timepoint.

#include <cmath>
#include <cstdint>
#include <numbers>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/blocks.hpp"
#include "eak/error.hpp"
#include "eak/parallel.hpp"
#include "eak/rng.hpp"
#include "eak/volume.hpp"

namespace eak {

struct PlantedActivation {
  std::int32_t label = 0;
  double amplitude = 0;
  bool positive = true;  // responds in positive-condition blocks
  bool negative = true;  // responds in negative-condition blocks
};

struct PlantedAlff {
  std::int32_t label = 0;
  double effect = 0;  // amplitude of the added sinusoid in group B
};

struct SynthConfig {
  Dims3 dims{20, 20, 12};
  double tr_s = 2.0;
  double voxel_mm = 3.0;
  int n_regions = 246;
  // task
  int n_subjects = 21;
  int blocks_per_condition = 3;
  std::vector<PlantedActivation> planted_active;
  // rest
  int n_group_a = 46;
  int n_group_b = 20;
  std::int64_t rest_volumes = 120;
  double alff_frequency_hz = 0.05;
  std::vector<PlantedAlff> planted_alff;

  double baseline = 100.0;
  double noise_sd = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    auto bad = [](const std::string& m) { fail(ErrorKind::Config, "synth: " + m); };
    if (dims.nx < 1 || dims.ny < 1 || dims.nz < 1) bad("dims must be positive");
    if (!(tr_s > 0) || !(voxel_mm > 0)) bad("tr and voxel size must be positive");
    if (n_regions < 1 || n_regions > dims.voxels()) bad("n_regions must lie in [1, voxels]");
    if (n_subjects < 1 || blocks_per_condition < 1) bad("subjects and blocks must be positive");
    if (n_group_a < 0 || n_group_b < 0 || rest_volumes < 1) bad("group sizes and rest length must be valid");
    if (!(noise_sd >= 0) || !std::isfinite(baseline)) bad("noise sd must be non-negative");
    if (!(alff_frequency_hz > 0 && alff_frequency_hz < 0.5 / tr_s)) bad("sinusoid frequency must be below Nyquist");
    for (const auto& p : planted_active) {
      if (p.label < 1 || p.label > n_regions) bad("planted label out of range");
      if (!(p.amplitude >= 0) || !std::isfinite(p.amplitude)) bad("amplitudes must be >= 0");
    }
    for (const auto& p : planted_alff) {
      if (p.label < 1 || p.label > n_regions) bad("planted label out of range");
      if (!(p.effect >= 0) || !std::isfinite(p.effect)) bad("effects must be >= 0");
    }
  }

  Affine affine() const {
    return Affine::scaled(voxel_mm, voxel_mm, voxel_mm, -voxel_mm * static_cast<double>(dims.nx) / 2,
                          -voxel_mm * static_cast<double>(dims.ny) / 2, -voxel_mm * static_cast<double>(dims.nz) / 2);
  }
};

inline Parcellation chunk_parcellation(const Dims3& dims, int n_regions) {
  const auto n = dims.voxels();
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n));
  for (std::int64_t v = 0; v < n; ++v) labels[static_cast<std::size_t>(v)] = static_cast<std::int32_t>(1 + v * n_regions / n);
  return Parcellation(dims, std::move(labels));
}

inline BlockDesign synth_design(const SynthConfig& cfg) { return BlockDesign::alternating(cfg.blocks_per_condition, cfg.tr_s); }

inline std::int64_t task_volumes(const SynthConfig& cfg) {
  return static_cast<std::int64_t>(std::ceil(synth_design(cfg).total_seconds() / cfg.tr_s - 1e-9));
}

inline std::string task_subject_id(int i) { return "sub-" + std::string(i < 9 ? "0" : "") + std::to_string(i + 1); }
inline std::string rest_subject_id(char group, int i) {
  return std::string(1, group) + "-" + std::string(i < 9 ? "0" : "") + std::to_string(i + 1);
}

namespace detail {

inline std::vector<double> noise(std::uint64_t seed, std::int64_t voxel, std::int64_t nt, double sd) {
  std::vector<double> out(static_cast<std::size_t>(nt));
  CounterRng rng(seed, static_cast<std::uint64_t>(voxel));
  for (auto& v : out) v = sd * rng.normal();
  return out;
}

template <typename Fill>
Volume4D render(const SynthConfig& cfg, std::int64_t nt, std::uint64_t subject_seed, Fill&& extra) {
  auto vol = Volume4D::zeros(cfg.dims, nt, {cfg.voxel_mm, cfg.voxel_mm, cfg.voxel_mm}, cfg.tr_s, cfg.affine());
  parallel_for(static_cast<std::size_t>(cfg.dims.voxels()), [&](std::size_t vi) {
    const auto v = static_cast<std::int64_t>(vi);
    const auto e = noise(subject_seed, v, nt, cfg.noise_sd);
    for (std::int64_t t = 0; t < nt; ++t)
      vol.at(v, t) = static_cast<float>(cfg.baseline + e[static_cast<std::size_t>(t)] + extra(v, t));
  });
  return vol;
}

}  // namespace detail

/// Stimulus indicator shifted one TR later: on for onset + stim_start + TR <= time < onset + stim_end + TR.
inline std::vector<double> lagged_indicator(const BlockDesign& d, std::int64_t nt, double tr, Condition c) {
  std::vector<double> out(static_cast<std::size_t>(nt), 0.0);
  for (const auto& b : d.blocks) {
    if (b.condition != c) continue;
    const double lo = b.onset_s + d.stim_window.start_s + tr, hi = b.onset_s + d.stim_window.end_s + tr;
    for (std::int64_t t = 0; t < nt; ++t) {
      const double s = static_cast<double>(t) * tr;
      if (s >= lo - 1e-9 && s < hi - 1e-9) out[static_cast<std::size_t>(t)] = 1.0;
    }
  }
  return out;
}

inline Volume4D synth_task_subject(const SynthConfig& cfg, int subject, const Parcellation& parc) {
  const auto design = synth_design(cfg);
  const auto nt = task_volumes(cfg);
  const auto pos = lagged_indicator(design, nt, cfg.tr_s, Condition::positive);
  const auto neg = lagged_indicator(design, nt, cfg.tr_s, Condition::negative);
  std::vector<double> amp_pos(static_cast<std::size_t>(cfg.n_regions) + 1, 0.0), amp_neg(amp_pos);
  for (const auto& p : cfg.planted_active) {
    if (p.positive) amp_pos[static_cast<std::size_t>(p.label)] += p.amplitude;
    if (p.negative) amp_neg[static_cast<std::size_t>(p.label)] += p.amplitude;
  }
  return detail::render(cfg, nt, derive_seed(cfg.seed, 0x5441534b00000000ULL + static_cast<std::uint64_t>(subject)),
                        [&](std::int64_t v, std::int64_t t) {
                          const auto l = static_cast<std::size_t>(parc.label_at(v));
                          return amp_pos[l] * pos[static_cast<std::size_t>(t)] + amp_neg[l] * neg[static_cast<std::size_t>(t)];
                        });
}

struct TaskDataset {
  std::vector<std::string> subject_ids;
  std::vector<Volume4D> volumes;
  Parcellation parcellation;
  BlockDesign design;
  nlohmann::json manifest;
};

inline nlohmann::json task_manifest(const SynthConfig& cfg, const Parcellation& parc) {
  nlohmann::json m;
  m["kind"] = "task";
  m["seed"] = cfg.seed;
  m["n_subjects"] = cfg.n_subjects;
  m["blocks_per_condition"] = cfg.blocks_per_condition;
  m["volumes_per_subject"] = task_volumes(cfg);
  m["active"] = nlohmann::json::array();
  std::set<std::int32_t> seen;
  for (const auto& p : cfg.planted_active) {
    if (p.amplitude <= 0 || !(p.positive || p.negative)) continue;
    m["active"].push_back({{"label", p.label},
                           {"amplitude", p.amplitude},
                           {"positive", p.positive},
                           {"negative", p.negative},
                           {"voxels", parc.voxels_of(p.label)}});
  }
  return m;
}

inline TaskDataset synth_task_dataset(const SynthConfig& cfg) {
  cfg.validate();
  TaskDataset d;
  d.parcellation = chunk_parcellation(cfg.dims, cfg.n_regions);
  d.design = synth_design(cfg);
  for (int s = 0; s < cfg.n_subjects; ++s) {
    d.subject_ids.push_back(task_subject_id(s));
    d.volumes.push_back(synth_task_subject(cfg, s, d.parcellation));
  }
  d.manifest = task_manifest(cfg, d.parcellation);
  return d;
}

/// Group 'A' or 'B'. Group B voxels in planted regions add effect * sin(2 pi f t + phi),
/// with phi drawn per subject.
inline Volume4D synth_rest_subject(const SynthConfig& cfg, char group, int index, const Parcellation& parc) {
  if (group != 'A' && group != 'B') fail(ErrorKind::Config, "group must be A or B");
  const std::uint64_t tag = (group == 'A' ? 0x524553544100000ULL : 0x524553544200000ULL) + static_cast<std::uint64_t>(index);
  const auto subject_seed = derive_seed(cfg.seed, tag);
  std::vector<double> effect(static_cast<std::size_t>(cfg.n_regions) + 1, 0.0);
  if (group == 'B')
    for (const auto& p : cfg.planted_alff) effect[static_cast<std::size_t>(p.label)] += p.effect;
  const double phase = 2 * std::numbers::pi * CounterRng(subject_seed, 0x5048415345ULL).uniform();
  const double w = 2 * std::numbers::pi * cfg.alff_frequency_hz * cfg.tr_s;
  return detail::render(cfg, cfg.rest_volumes, subject_seed, [&](std::int64_t v, std::int64_t t) {
    const double e = effect[static_cast<std::size_t>(parc.label_at(v))];
    return e == 0 ? 0.0 : e * std::sin(w * static_cast<double>(t) + phase);
  });
}

struct RestDataset {
  std::vector<std::string> ids_a, ids_b;
  std::vector<Volume4D> group_a, group_b;
  Parcellation parcellation;
  nlohmann::json manifest;
};

inline nlohmann::json rest_manifest(const SynthConfig& cfg, const Parcellation& parc) {
  nlohmann::json m;
  m["kind"] = "rest";
  m["seed"] = cfg.seed;
  m["n_group_a"] = cfg.n_group_a;
  m["n_group_b"] = cfg.n_group_b;
  m["volumes_per_subject"] = cfg.rest_volumes;
  m["frequency_hz"] = cfg.alff_frequency_hz;
  m["alff"] = nlohmann::json::array();
  for (const auto& p : cfg.planted_alff) {
    if (p.effect <= 0) continue;
    m["alff"].push_back({{"label", p.label},
                         {"effect", p.effect},
                         {"direction", "group_b_higher"},
                         {"expected_t_sign", -1},
                         {"voxels", parc.voxels_of(p.label)}});
  }
  return m;
}

inline RestDataset synth_rest_dataset(const SynthConfig& cfg) {
  cfg.validate();
  RestDataset d;
  d.parcellation = chunk_parcellation(cfg.dims, cfg.n_regions);
  for (int i = 0; i < cfg.n_group_a; ++i) {
    d.ids_a.push_back(rest_subject_id('A', i));
    d.group_a.push_back(synth_rest_subject(cfg, 'A', i, d.parcellation));
  }
  for (int i = 0; i < cfg.n_group_b; ++i) {
    d.ids_b.push_back(rest_subject_id('B', i));
    d.group_b.push_back(synth_rest_subject(cfg, 'B', i, d.parcellation));
  }
  d.manifest = rest_manifest(cfg, d.parcellation);
  return d;
}

inline SynthConfig synth_config_from_json(const nlohmann::json& j, SynthConfig cfg = {}) {
  try {
    if (j.contains("dims")) cfg.dims = {j["dims"].at(0).get<std::int64_t>(), j["dims"].at(1).get<std::int64_t>(), j["dims"].at(2).get<std::int64_t>()};
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("tr_s", cfg.tr_s);
    get("voxel_mm", cfg.voxel_mm);
    get("n_regions", cfg.n_regions);
    get("n_subjects", cfg.n_subjects);
    get("blocks_per_condition", cfg.blocks_per_condition);
    get("n_group_a", cfg.n_group_a);
    get("n_group_b", cfg.n_group_b);
    get("rest_volumes", cfg.rest_volumes);
    get("alff_frequency_hz", cfg.alff_frequency_hz);
    get("baseline", cfg.baseline);
    get("noise_sd", cfg.noise_sd);
    get("seed", cfg.seed);
    if (j.contains("planted_active")) {
      cfg.planted_active.clear();
      for (const auto& p : j["planted_active"])
        cfg.planted_active.push_back({p.at("label").get<std::int32_t>(), p.at("amplitude").get<double>(),
                                      p.value("positive", true), p.value("negative", true)});
    }
    if (j.contains("planted_alff")) {
      cfg.planted_alff.clear();
      for (const auto& p : j["planted_alff"])
        cfg.planted_alff.push_back({p.at("label").get<std::int32_t>(), p.at("effect").get<double>()});
    }
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::Config, std::string("synth config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

}  // namespace eak
