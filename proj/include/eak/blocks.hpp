#pragma once

// Block-design windowing: each condition occurrence contributes a stimulus
// window and a rest window of equal length, sampled at acquisition times k*TR.
// Volume k belongs to window [a, b) of a block with onset o iff k*TR - o is in [a, b).

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/volume.hpp"

namespace eak {

enum class Condition { positive, negative };

inline std::string_view to_string(Condition c) { return c == Condition::positive ? "positive" : "negative"; }

inline Condition parse_condition(std::string_view s) {
  if (s == "positive") return Condition::positive;
  if (s == "negative") return Condition::negative;
  fail(ErrorKind::Config, "unknown condition '" + std::string(s) + "'");
}

struct Window {
  double start_s = 0;
  double end_s = 0;
  double length() const { return end_s - start_s; }
};

struct BlockOnset {
  Condition condition = Condition::positive;
  double onset_s = 0;
};

struct BlockDesign {
  std::vector<BlockOnset> blocks;
  double block_length_s = 40;
  Window stim_window{10, 20};
  Window rest_window{30, 40};
  double lead_in_s = 20;
  /// Optional; when > 0 it must agree with the volume's TR.
  double tr_s = 0;

  /// Alternating positive/negative blocks after the lead-in, the shape of
  /// a rest-positive-rest-negative paradigm where each block is stimulus then rest.
  static BlockDesign alternating(int blocks_per_condition, double tr_s = 2.0) {
    BlockDesign d;
    d.tr_s = tr_s;
    for (int i = 0; i < 2 * blocks_per_condition; ++i)
      d.blocks.push_back({i % 2 == 0 ? Condition::positive : Condition::negative, d.lead_in_s + i * d.block_length_s});
    return d;
  }

  double total_seconds() const { return blocks.empty() ? lead_in_s : blocks.back().onset_s + block_length_s; }
};

struct Block {
  std::string subject_id;
  Condition condition = Condition::positive;
  int block_index = 0;  // occurrence index within the subject's run
  std::vector<std::int64_t> stim_volumes;
  std::vector<std::int64_t> rest_volumes;

  friend bool operator==(const Block&, const Block&) = default;
};

namespace detail {

inline void validate_design(const BlockDesign& d) {
  auto check_window = [&](const Window& w, const char* name) {
    if (!(w.start_s >= 0 && w.end_s <= d.block_length_s && w.start_s < w.end_s))
      fail(ErrorKind::WindowOutOfRange, std::string(name) + " window outside [0, block_length]");
  };
  if (!(d.block_length_s > 0)) fail(ErrorKind::Config, "block_length_s must be positive");
  check_window(d.stim_window, "stimulus");
  check_window(d.rest_window, "rest");
  if (std::abs(d.stim_window.length() - d.rest_window.length()) > 1e-9)
    fail(ErrorKind::Config, "stimulus and rest windows must have equal length");
  for (std::size_t i = 0; i < d.blocks.size(); ++i) {
    if (d.blocks[i].onset_s < 0) fail(ErrorKind::Config, "negative onset");
    if (i > 0 && !(d.blocks[i].onset_s > d.blocks[i - 1].onset_s))
      fail(ErrorKind::Config, "onsets must be strictly increasing");
  }
}

/// Volume indices k with k*tr in [lo, hi).
inline std::vector<std::int64_t> sample_indices(double lo, double hi, double tr) {
  constexpr double eps = 1e-9;
  std::vector<std::int64_t> out;
  for (auto k = static_cast<std::int64_t>(std::ceil(lo / tr - eps)); static_cast<double>(k) * tr < hi - eps * tr; ++k)
    out.push_back(k);
  return out;
}

}  // namespace detail

inline std::vector<Block> split_blocks(std::int64_t nt, double tr_seconds, const BlockDesign& design,
                                       const std::string& subject_id) {
  detail::validate_design(design);
  if (design.tr_s > 0 && std::abs(design.tr_s - tr_seconds) > 1e-9)
    fail(ErrorKind::TrIncompatible, "design TR differs from volume TR");
  const double steps = design.stim_window.length() / tr_seconds;
  if (std::abs(steps - std::round(steps)) > 1e-9)
    fail(ErrorKind::TrIncompatible, "window length is not a multiple of TR");
  const auto per_window = static_cast<std::size_t>(std::llround(steps));

  std::vector<Block> out;
  int pos_count = 0, neg_count = 0;
  for (const auto& b : design.blocks) {
    Block blk;
    blk.subject_id = subject_id;
    blk.condition = b.condition;
    blk.block_index = b.condition == Condition::positive ? pos_count++ : neg_count++;
    blk.stim_volumes =
        detail::sample_indices(b.onset_s + design.stim_window.start_s, b.onset_s + design.stim_window.end_s, tr_seconds);
    blk.rest_volumes =
        detail::sample_indices(b.onset_s + design.rest_window.start_s, b.onset_s + design.rest_window.end_s, tr_seconds);
    if (blk.stim_volumes.size() != per_window || blk.rest_volumes.size() != per_window)
      fail(ErrorKind::TrIncompatible, "window does not map to a whole number of volumes");
    for (auto k : blk.stim_volumes)
      if (k >= nt) fail(ErrorKind::WindowOutOfRange, "block at onset " + std::to_string(b.onset_s) + " s exceeds run");
    for (auto k : blk.rest_volumes)
      if (k >= nt) fail(ErrorKind::WindowOutOfRange, "block at onset " + std::to_string(b.onset_s) + " s exceeds run");
    out.push_back(std::move(blk));
  }
  return out;
}

inline std::vector<Block> split_blocks(const Volume4D& vol, const BlockDesign& design, const std::string& subject_id) {
  return split_blocks(vol.nt(), vol.tr_seconds(), design, subject_id);
}

/// All blocks of one condition, subject order then block order.
inline std::vector<Block> pool_blocks(const std::vector<std::vector<Block>>& per_subject, Condition condition) {
  std::vector<Block> out;
  for (const auto& subject : per_subject)
    for (const auto& b : subject)
      if (b.condition == condition) out.push_back(b);
  return out;
}

// JSON

inline BlockDesign design_from_json(const nlohmann::json& j) {
  try {
    BlockDesign d;
    d.tr_s = j.value("tr_s", 0.0);
    d.lead_in_s = j.value("lead_in_s", 20.0);
    d.block_length_s = j.value("block_length_s", 40.0);
    if (j.contains("stim_window_s")) {
      const auto w = j.at("stim_window_s").get<std::array<double, 2>>();
      d.stim_window = {w[0], w[1]};
    }
    if (j.contains("rest_window_s")) {
      const auto w = j.at("rest_window_s").get<std::array<double, 2>>();
      d.rest_window = {w[0], w[1]};
    }
    for (const auto& b : j.at("blocks"))
      d.blocks.push_back({parse_condition(b.at("condition").get<std::string>()), b.at("onset_s").get<double>()});
    detail::validate_design(d);
    return d;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("design: ") + e.what());
  }
}

inline nlohmann::json design_to_json(const BlockDesign& d) {
  nlohmann::json j;
  j["tr_s"] = d.tr_s;
  j["lead_in_s"] = d.lead_in_s;
  j["block_length_s"] = d.block_length_s;
  j["stim_window_s"] = {d.stim_window.start_s, d.stim_window.end_s};
  j["rest_window_s"] = {d.rest_window.start_s, d.rest_window.end_s};
  j["blocks"] = nlohmann::json::array();
  for (const auto& b : d.blocks) j["blocks"].push_back({{"condition", to_string(b.condition)}, {"onset_s", b.onset_s}});
  return j;
}

inline nlohmann::json blocks_to_json(const std::vector<Block>& blocks) {
  auto arr = nlohmann::json::array();
  for (const auto& b : blocks)
    arr.push_back({{"subject_id", b.subject_id},
                   {"condition", to_string(b.condition)},
                   {"block_index", b.block_index},
                   {"stim_volumes", b.stim_volumes},
                   {"rest_volumes", b.rest_volumes}});
  return arr;
}

inline std::vector<Block> blocks_from_json(const nlohmann::json& arr) {
  try {
    std::vector<Block> out;
    for (const auto& j : arr) {
      Block b;
      b.subject_id = j.at("subject_id").get<std::string>();
      b.condition = parse_condition(j.at("condition").get<std::string>());
      b.block_index = j.value("block_index", 0);
      b.stim_volumes = j.at("stim_volumes").get<std::vector<std::int64_t>>();
      b.rest_volumes = j.at("rest_volumes").get<std::vector<std::int64_t>>();
      out.push_back(std::move(b));
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, std::string("blocks: ") + e.what());
  }
}

}  // namespace eak
