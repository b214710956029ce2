// eak: command-line front end. One pipeline stage per subcommand; every stage
// reads and writes files only. Logs go to stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/eak.hpp"

namespace {

using nlohmann::json;
namespace fs = std::filesystem;
using namespace eak;

void log(const std::string& msg) { std::cerr << "eak: " << msg << '\n'; }

// ---------------------------------------------------------------- options

struct Binding {
  CLI::Option* opt;
  std::string key;
  std::function<void(const json&)> set;
};

struct Command {
  CLI::App* app = nullptr;
  std::vector<Binding> bindings;
  std::string config;
  unsigned threads = 0;
  std::uint64_t seed = 0;
  bool seed_given = false;
  bool randomized = false;
  std::function<void(Command&)> run;
};

std::string key_of(const std::string& flag) {
  auto k = flag.substr(flag.find_first_not_of('-'));
  for (auto& c : k)
    if (c == '-') c = '_';
  return k;
}

template <typename T>
CLI::Option* add_bound(Command& c, const std::string& flag, T& var, const std::string& help) {
  auto* o = c.app->add_option(flag, var, help);
  if constexpr (!std::is_same_v<T, std::vector<std::string>> && !std::is_same_v<T, std::vector<double>> &&
                !std::is_same_v<T, std::vector<int>> && !std::is_same_v<T, std::vector<std::int64_t>>)
    o->capture_default_str();
  c.bindings.push_back({o, key_of(flag), [&var](const json& j) { var = j.get<T>(); }});
  return o;
}

CLI::Option* bind_flag(Command& c, const std::string& flag, bool& var, const std::string& help) {
  auto* o = c.app->add_flag(flag, var, help);
  c.bindings.push_back({o, key_of(flag), [&var](const json& j) { var = j.get<bool>(); }});
  return o;
}

/// Config values apply to options not given on the command line. A section named
/// after the subcommand overrides top-level keys.
void apply_config(Command& c) {
  if (c.config.empty()) return;
  std::ifstream in(c.config);
  if (!in) fail(ErrorKind::Config, "cannot open config " + c.config);
  json cfg;
  try {
    cfg = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::Config, "config " + c.config + ": " + e.what());
  }
  if (!cfg.is_object()) fail(ErrorKind::Config, "config must be a JSON object");
  json merged = json::object();
  for (const auto& [k, v] : cfg.items())
    if (!v.is_object() || k == "planted_active") merged[k] = v;
  if (cfg.contains(c.app->get_name()) && cfg[c.app->get_name()].is_object())
    for (const auto& [k, v] : cfg[c.app->get_name()].items()) merged[k] = v;
  for (auto& b : c.bindings) {
    if (b.opt->count() > 0 || !merged.contains(b.key)) continue;
    try {
      b.set(merged[b.key]);
    } catch (const json::exception& e) {
      fail(ErrorKind::Config, "config key '" + b.key + "': " + e.what());
    }
    if (b.key == "seed") c.seed_given = true;
  }
}

// ---------------------------------------------------------------- files

void ensure_parent(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
}

void write_text(const fs::path& p, const std::string& s) {
  ensure_parent(p);
  std::ofstream out(p, std::ios::binary);
  if (!out) fail(ErrorKind::Config, "cannot write " + p.string());
  out << s;
}

void write_json(const fs::path& p, const json& j) { write_text(p, j.dump(1) + "\n"); }

json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::Config, "cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaError, p.string() + ": " + e.what());
  }
}

template <typename T>
T field(const json& j, const std::string& key, const fs::path& from) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaError, from.string() + ": " + e.what());
  }
}

fs::path resolve(const fs::path& manifest, const std::string& rel) {
  const fs::path p(rel);
  return p.is_absolute() ? p : manifest.parent_path() / p;
}

std::string require(const std::string& value, const std::string& flag) {
  if (value.empty()) fail(ErrorKind::Config, "missing required option --" + flag);
  return value;
}

Parcellation load_parc(const fs::path& p) {
  auto names = p;
  names.replace_extension(".labels.csv");
  return load_parcellation(p, fs::exists(names) ? names : fs::path{});
}

Volume4D load_parc_image(const fs::path& p) { return load_volume(p); }

struct SubjectList {
  std::vector<std::string> ids;
  std::vector<fs::path> paths;
};

SubjectList read_subject_list(const fs::path& file, const json& arr) {
  SubjectList s;
  try {
    for (const auto& e : arr) {
      s.ids.push_back(e.at("id").get<std::string>());
      s.paths.push_back(resolve(file, e.at("path").get<std::string>()));
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::SchemaError, file.string() + ": " + e.what());
  }
  return s;
}

json subject_list_json(const std::vector<std::string>& ids, const std::vector<std::string>& rel) {
  json a = json::array();
  for (std::size_t i = 0; i < ids.size(); ++i) a.push_back({{"id", ids[i]}, {"path", rel[i]}});
  return a;
}

/// Subjects manifest: {"subjects": [{id, path}], "design": path, "parcellation": path}.
struct TaskInputs {
  fs::path file;
  json manifest;
  SubjectList subjects;
  std::vector<Volume4D> volumes;
  std::map<std::string, std::size_t> index;

  explicit TaskInputs(const fs::path& f) : file(f), manifest(read_json_file(f)) {
    if (!manifest.contains("subjects")) fail(ErrorKind::SchemaError, f.string() + ": missing 'subjects'");
    subjects = read_subject_list(f, manifest["subjects"]);
  }
  void load() {
    volumes.clear();
    for (std::size_t i = 0; i < subjects.paths.size(); ++i) {
      volumes.push_back(load_volume(subjects.paths[i]));
      index[subjects.ids[i]] = i;
    }
  }
  VolumeLookup lookup() const {
    return [this](const std::string& id) -> const Volume4D& {
      const auto it = index.find(id);
      if (it == index.end()) fail(ErrorKind::Config, "unknown subject '" + id + "'");
      return volumes[it->second];
    };
  }
  fs::path sibling(const std::string& key, const std::string& given) const {
    if (!given.empty()) return given;
    if (!manifest.contains(key)) fail(ErrorKind::Config, "missing --" + key + " and no default in " + file.string());
    return resolve(file, manifest[key].get<std::string>());
  }
};

std::vector<Block> read_pooled(const fs::path& blocks_file, Condition c) {
  const auto j = read_json_file(blocks_file);
  const std::string key(to_string(c));
  if (!j.contains(key)) fail(ErrorKind::SchemaError, blocks_file.string() + ": missing '" + key + "'");
  return blocks_from_json(j[key]);
}

EliminationSchedule parse_schedule(const std::string& s) {
  if (s == "one") return EliminationSchedule::one();
  try {
    std::size_t pos = 0;
    const double f = std::stod(s, &pos);
    if (pos == s.size() && f > 0 && f < 1) return EliminationSchedule::fraction_of(f);
  } catch (const std::exception&) {
  }
  fail(ErrorKind::Config, "schedule must be 'one' or a fraction in (0, 1)");
}

AccuracyTieRule parse_tie_rule(const std::string& s) {
  if (s == "lowest_hinge") return AccuracyTieRule::lowest_hinge;
  if (s == "fewest_features") return AccuracyTieRule::fewest_features;
  if (s == "most_features") return AccuracyTieRule::most_features;
  fail(ErrorKind::Config, "tie rule must be lowest_hinge, fewest_features or most_features");
}

Dims3 dims_from(const std::vector<std::int64_t>& v) {
  if (v.size() != 3) fail(ErrorKind::Config, "--dims takes three values");
  return {v[0], v[1], v[2]};
}

// ---------------------------------------------------------------- stages

struct SynthTaskOpts {
  std::string out;
  std::vector<std::int64_t> dims{20, 20, 12};
  int regions = 246, subjects = 21, blocks = 3;
  double tr = 2.0, noise_sd = 1.0, amplitude = 1.0, baseline = 100.0;
  std::vector<int> planted;
  std::string planted_condition = "both";
};

void run_synth_task(Command& c, const SynthTaskOpts& o) {
  SynthConfig cfg;
  cfg.dims = dims_from(o.dims);
  cfg.n_regions = o.regions;
  cfg.n_subjects = o.subjects;
  cfg.blocks_per_condition = o.blocks;
  cfg.tr_s = o.tr;
  cfg.noise_sd = o.noise_sd;
  cfg.baseline = o.baseline;
  cfg.seed = c.seed;
  if (o.planted_condition != "both" && o.planted_condition != "positive" && o.planted_condition != "negative")
    fail(ErrorKind::Config, "--planted-condition must be positive, negative or both");
  for (int l : o.planted)
    cfg.planted_active.push_back({l, o.amplitude, o.planted_condition != "negative", o.planted_condition != "positive"});
  cfg.validate();

  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  const auto parc = chunk_parcellation(cfg.dims, cfg.n_regions);
  save_parcellation(parc, out / "parcellation.json", {cfg.voxel_mm, cfg.voxel_mm, cfg.voxel_mm}, cfg.affine());
  write_json(out / "design.json", design_to_json(synth_design(cfg)));
  std::vector<std::string> ids, rel;
  for (int s = 0; s < cfg.n_subjects; ++s) {
    ids.push_back(task_subject_id(s));
    rel.push_back(ids.back() + ".json");
    save_raw_json(synth_task_subject(cfg, s, parc), out / rel.back());
  }
  write_json(out / "subjects.json", {{"subjects", subject_list_json(ids, rel)},
                                     {"design", "design.json"},
                                     {"parcellation", "parcellation.json"}});
  write_json(out / "manifest.json", task_manifest(cfg, parc));
  log("wrote " + std::to_string(cfg.n_subjects) + " task runs of " + std::to_string(task_volumes(cfg)) + " volumes to " +
      out.string());
}

struct SynthRestOpts {
  std::string out;
  std::vector<std::int64_t> dims{20, 20, 12};
  int regions = 246, group_a = 46, group_b = 20;
  std::int64_t volumes = 120;
  double tr = 2.0, noise_sd = 1.0, effect = 1.0, frequency = 0.05, baseline = 100.0;
  std::vector<int> planted;
};

void run_synth_rest(Command& c, const SynthRestOpts& o) {
  SynthConfig cfg;
  cfg.dims = dims_from(o.dims);
  cfg.n_regions = o.regions;
  cfg.n_group_a = o.group_a;
  cfg.n_group_b = o.group_b;
  cfg.rest_volumes = o.volumes;
  cfg.tr_s = o.tr;
  cfg.noise_sd = o.noise_sd;
  cfg.baseline = o.baseline;
  cfg.alff_frequency_hz = o.frequency;
  cfg.seed = c.seed;
  for (int l : o.planted) cfg.planted_alff.push_back({l, o.effect});
  cfg.validate();

  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  const auto parc = chunk_parcellation(cfg.dims, cfg.n_regions);
  save_parcellation(parc, out / "parcellation.json", {cfg.voxel_mm, cfg.voxel_mm, cfg.voxel_mm}, cfg.affine());
  json groups{{"parcellation", "parcellation.json"}};
  for (char g : {'A', 'B'}) {
    const int n = g == 'A' ? cfg.n_group_a : cfg.n_group_b;
    std::vector<std::string> ids, rel;
    for (int i = 0; i < n; ++i) {
      ids.push_back(rest_subject_id(g, i));
      rel.push_back(ids.back() + ".json");
      save_raw_json(synth_rest_subject(cfg, g, i, parc), out / rel.back());
    }
    groups[g == 'A' ? "group_a" : "group_b"] = subject_list_json(ids, rel);
  }
  write_json(out / "groups.json", groups);
  write_json(out / "manifest.json", rest_manifest(cfg, parc));
  log("wrote " + std::to_string(cfg.n_group_a) + " + " + std::to_string(cfg.n_group_b) + " resting runs to " + out.string());
}

struct SplitOpts {
  std::string subjects, design, out;
};

void run_split(const SplitOpts& o) {
  TaskInputs in(require(o.subjects, "subjects"));
  const auto design = design_from_json(read_json_file(in.sibling("design", o.design)));
  std::vector<std::vector<Block>> per;
  for (std::size_t i = 0; i < in.subjects.ids.size(); ++i) {
    const auto vol = load_volume(in.subjects.paths[i]);
    per.push_back(split_blocks(vol, design, in.subjects.ids[i]));
  }
  const auto pos = pool_blocks(per, Condition::positive), neg = pool_blocks(per, Condition::negative);
  write_json(require(o.out, "out"), {{"design", design_to_json(design)},
                                     {"positive", blocks_to_json(pos)},
                                     {"negative", blocks_to_json(neg)}});
  log("pooled " + std::to_string(pos.size()) + " positive and " + std::to_string(neg.size()) + " negative blocks");
}

struct FeaturesOpts {
  std::string subjects, blocks, parcellation, out;
  bool shared_normalization = false, cache = false;
};

void run_features(const FeaturesOpts& o) {
  TaskInputs in(require(o.subjects, "subjects"));
  in.load();
  const auto parc = load_parc(in.sibling("parcellation", o.parcellation));
  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  const auto units = roi_units(parc);
  for (auto c : {Condition::positive, Condition::negative}) {
    const auto blocks = read_pooled(require(o.blocks, "blocks"), c);
    const auto X = assemble_matrix(blocks, units, in.lookup(), {o.shared_normalization});
    const std::string name(to_string(c));
    write_matrix_csv(X, out / (name + ".csv"));
    if (o.cache) write_matrix_cache(X, out / (name + ".matrix.json"));
    log(name + ": " + std::to_string(X.rows()) + "x" + std::to_string(X.cols()) + " (" +
        std::to_string(X.count_label(1)) + " stimulus, " + std::to_string(X.count_label(-1)) + " rest)");
  }
}

struct RfeOpts {
  std::string subjects, blocks, parcellation, condition = "positive", out, matrix;
  std::string roi_schedule = "one", voxel_schedule = "one", tie_rule = "lowest_hinge";
  int folds = 10;
  double C = 1.0;
  bool stage1_only = false, shared_normalization = false;
};

void run_rfe(Command& c, const RfeOpts& o) {
  TaskInputs in(require(o.subjects, "subjects"));
  in.load();
  const auto parc = load_parc(in.sibling("parcellation", o.parcellation));
  const auto cond = parse_condition(o.condition);
  const auto blocks = read_pooled(require(o.blocks, "blocks"), cond);
  const FeatureOptions fopts{o.shared_normalization};
  const auto lookup = in.lookup();
  const auto roi = o.matrix.empty() ? assemble_matrix(blocks, roi_units(parc), lookup, fopts) : read_matrix_csv(o.matrix);

  TrainConfig cfg;
  cfg.C = o.C;
  cfg.validate();
  const auto tie = parse_tie_rule(o.tie_rule);
  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  json result{{"condition", o.condition}, {"seed", c.seed}, {"folds", o.folds}, {"C", o.C}};

  RfeTrace roi_trace;
  std::map<std::int32_t, std::vector<std::int64_t>> sub_rois;
  json voxel_traces = json::object();
  std::vector<std::int32_t> characteristic;
  std::vector<std::string> warnings;
  if (o.stage1_only) {
    roi_trace = svm_rfe(roi, o.folds, cfg, parse_schedule(o.roi_schedule), derive_seed(c.seed, 0x524f49), tie);
    warnings = roi_trace.warnings;
    for (auto id : roi_trace.best_subset) characteristic.push_back(static_cast<std::int32_t>(id));
  } else {
    TwoStageOptions t;
    t.folds = o.folds;
    t.cfg = cfg;
    t.roi_schedule = parse_schedule(o.roi_schedule);
    t.voxel_schedule = parse_schedule(o.voxel_schedule);
    const auto r = two_stage_select(
        roi, [&](std::int32_t label) { return assemble_matrix(blocks, voxel_units(parc, label), lookup, fopts); }, t,
        c.seed);
    roi_trace = r.roi_trace;
    sub_rois = r.sub_rois;
    characteristic = r.characteristic_rois;
    warnings = r.warnings;
    for (const auto& [label, tr] : r.voxel_traces) voxel_traces[std::to_string(label)] = trace_to_json(tr);
  }
  json subs = json::object();
  for (const auto& [label, voxels] : sub_rois) subs[std::to_string(label)] = voxels;
  result["characteristic_rois"] = characteristic;
  result["sub_rois"] = subs;
  result["roi_trace"] = trace_to_json(roi_trace);
  result["voxel_traces"] = voxel_traces;
  result["warnings"] = warnings;
  for (const auto& w : warnings) log("warning: " + w);
  write_json(out / "rfe.json", result);
  write_text(out / "roi_accuracy.csv", accuracy_curve_csv(roi_trace));
  log(o.condition + ": " + std::to_string(characteristic.size()) + " characteristic ROIs, best CV accuracy " +
      std::to_string(roi_trace.best_accuracy));
}

std::vector<SubRoi> sub_rois_from_rfe(const json& rfe, const fs::path& from) {
  std::vector<SubRoi> out;
  try {
    for (const auto& [k, v] : rfe.at("sub_rois").items()) out.push_back({std::stoi(k), v.get<std::vector<std::int64_t>>()});
  } catch (const std::exception& e) {
    fail(ErrorKind::SchemaError, from.string() + ": bad sub_rois: " + e.what());
  }
  std::sort(out.begin(), out.end(), [](const SubRoi& a, const SubRoi& b) { return a.parent_label < b.parent_label; });
  return out;
}

struct FcOpts {
  std::string subjects, blocks, parcellation, rfe, condition, out;
  double threshold = 0.95;
  bool include_rest = false;
};

void run_fc_expand(const FcOpts& o) {
  const fs::path rfe_path = require(o.rfe, "rfe");
  const auto rfe = read_json_file(rfe_path);
  const auto subs = sub_rois_from_rfe(rfe, rfe_path);
  if (subs.empty()) fail(ErrorKind::Config, "no characteristic sub-ROIs in " + rfe_path.string());
  const std::string cond_name = o.condition.empty() ? field<std::string>(rfe, "condition", rfe_path) : o.condition;
  TaskInputs in(require(o.subjects, "subjects"));
  in.load();
  const auto parc = load_parc(in.sibling("parcellation", o.parcellation));
  const auto blocks = read_pooled(require(o.blocks, "blocks"), parse_condition(cond_name));
  const auto r = fc_expand(blocks, in.lookup(), subs, parc, o.threshold, {o.include_rest});
  json hits = json::array();
  for (const auto& h : r.hits) {
    const auto g = parc.dims().unlinear(h.voxel);
    hits.push_back({{"voxel", h.voxel},
                    {"grid", {g.x, g.y, g.z}},
                    {"parent_label", h.parent_label},
                    {"sub_roi_label", subs[h.best_sub_roi].parent_label},
                    {"r", h.best_r}});
  }
  std::set<std::int32_t> regions;
  for (const auto& h : r.hits) regions.insert(h.parent_label);
  write_json(require(o.out, "out"), {{"condition", cond_name},
                                     {"threshold", o.threshold},
                                     {"include_rest", o.include_rest},
                                     {"screened", r.screened},
                                     {"degenerate", r.degenerate},
                                     {"n_regions", regions.size()},
                                     {"hits", hits}});
  if (r.degenerate > 0) log("skipped " + std::to_string(r.degenerate) + " zero-variance voxels");
  log("retained " + std::to_string(r.hits.size()) + " voxels over " + std::to_string(regions.size()) + " regions");
}

struct AtlasOpts {
  std::string rfe, expansion, parcellation, name, out;
};

void run_atlas_build(const AtlasOpts& o) {
  const fs::path rfe_path = require(o.rfe, "rfe");
  const auto rfe = read_json_file(rfe_path);
  const auto subs = sub_rois_from_rfe(rfe, rfe_path);
  const auto parc = load_parc(require(o.parcellation, "parcellation"));
  std::vector<FcHit> hits;
  double threshold = 0.95;
  if (!o.expansion.empty()) {
    const auto ex = read_json_file(o.expansion);
    threshold = field<double>(ex, "threshold", o.expansion);
    try {
      for (const auto& h : ex.at("hits"))
        hits.push_back({h.at("voxel").get<std::int64_t>(), h.at("parent_label").get<std::int32_t>(), 0, h.at("r").get<double>()});
    } catch (const json::exception& e) {
      fail(ErrorKind::SchemaError, o.expansion + ": " + e.what());
    }
  }
  std::string name = o.name;
  if (name.empty()) name = field<std::string>(rfe, "condition", rfe_path) == "positive" ? "PEA" : "NEA";
  json construction{{"seed", rfe.value("seed", std::uint64_t{0})},
                    {"condition", rfe.value("condition", std::string{})},
                    {"folds", rfe.value("folds", 0)}};
  const auto a = build_atlas(name, subs, hits, parc, threshold, construction);
  save_atlas(a, require(o.out, "out"));
  log(name + ": " + std::to_string(a.region_count()) + " regions (" + std::to_string(subs.size()) + " sub-ROIs + " +
      std::to_string(a.region_count() - subs.size()) + " expanded), " + std::to_string(a.voxel_count()) + " voxels");
}

struct RestInputs {
  fs::path file;
  json manifest;
  SubjectList a, b;
  explicit RestInputs(const fs::path& f) : file(f), manifest(read_json_file(f)) {
    if (!manifest.contains("group_a") || !manifest.contains("group_b"))
      fail(ErrorKind::SchemaError, f.string() + ": needs group_a and group_b");
    a = read_subject_list(f, manifest["group_a"]);
    b = read_subject_list(f, manifest["group_b"]);
  }
  fs::path parcellation(const std::string& given) const {
    if (!given.empty()) return given;
    if (!manifest.contains("parcellation")) fail(ErrorKind::Config, "missing --parcellation");
    return resolve(file, manifest["parcellation"].get<std::string>());
  }
};

std::vector<std::uint8_t> atlas_mask(const AtlasSpec& a, const Dims3& d) {
  std::vector<std::uint8_t> m(static_cast<std::size_t>(d.voxels()), 0);
  for (const auto& u : a.units)
    for (const auto& g : u.voxels) m[static_cast<std::size_t>(d.linear(g))] = 1;
  return m;
}

struct AlffOpts {
  std::string groups, parcellation, atlas, out;
  double band_lo = 0.01, band_hi = 0.08;
  bool smooth = false;
};

void run_alff(const AlffOpts& o) {
  RestInputs in(require(o.groups, "groups"));
  const auto parc = load_parc(in.parcellation(o.parcellation));
  std::vector<std::uint8_t> mask;
  if (!o.atlas.empty()) {
    mask = atlas_mask(load_atlas(o.atlas, &parc), parc.dims());
  } else {
    mask.resize(static_cast<std::size_t>(parc.dims().voxels()));
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = parc.label_at(static_cast<std::int64_t>(i)) != 0;
  }
  const Band band{o.band_lo, o.band_hi};
  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  json maps{{"parcellation", fs::relative(fs::absolute(in.parcellation(o.parcellation)), fs::absolute(out)).generic_string()}, {"band", {band.lo_hz, band.hi_hz}}};
  for (const auto* group : {&in.a, &in.b}) {
    std::vector<std::string> rel;
    for (std::size_t i = 0; i < group->ids.size(); ++i) {
      auto vol = load_volume(group->paths[i]);
      require_same_grid(vol, parc);
      if (o.smooth) vol = gaussian_smooth(vol);
      rel.push_back(group->ids[i] + ".alff.json");
      save_statmap(alff_map(vol, mask, band), out / rel.back());
    }
    maps[group == &in.a ? "group_a" : "group_b"] = subject_list_json(group->ids, rel);
  }
  write_json(out / "maps.json", maps);
  log("ALFF maps: " + std::to_string(in.a.ids.size()) + " + " + std::to_string(in.b.ids.size()) + " subjects, " +
      std::to_string(std::count(mask.begin(), mask.end(), 1)) + " voxels in mask");
}

struct GroupStatsOpts {
  std::string maps, parcellation, out;
  double q = 0.01;
  int connectivity = 26;
};

void run_group_stats(const GroupStatsOpts& o) {
  const fs::path maps_path = require(o.maps, "maps");
  RestInputs in(maps_path);
  const auto conn = parse_connectivity(o.connectivity);
  const auto parc_path = in.parcellation(o.parcellation);
  const auto parc = load_parc(parc_path);
  const auto image = load_parc_image(parc_path);
  std::vector<StatMap> a, b;
  for (const auto& p : in.a.paths) a.push_back(load_statmap(p));
  for (const auto& p : in.b.paths) b.push_back(load_statmap(p));
  const auto tp = two_sample_t(a, b);
  const auto reject = fdr_reject_mask(tp.p, o.q);
  auto report = extract_clusters(reject, tp.t.values, parc.dims(), &parc, image.affine(), image.voxel_volume_mm3(), conn);
  report.q = o.q;
  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  save_statmap(tp.t, out / "t.json");
  save_statmap(tp.p, out / "p.json");
  auto j = cluster_report_to_json(report, &parc);
  j["n_tested"] = tp.t.mask_voxels().size();
  j["n_rejected"] = std::count(reject.begin(), reject.end(), 1);
  j["sign_convention"] = "t > 0 when group_a mean exceeds group_b mean";
  write_json(out / "clusters.json", j);
  write_text(out / "clusters.csv", cluster_report_csv(report, &parc));
  log(std::to_string(j["n_rejected"].get<std::int64_t>()) + " of " + std::to_string(j["n_tested"].get<std::size_t>()) +
      " voxels significant at q=" + std::to_string(o.q) + ", " + std::to_string(report.clusters.size()) + " clusters");
}

struct ClassifyOpts {
  std::string groups, parcellation, mode = "alff_per_unit", out;
  std::vector<std::string> atlas;
  std::vector<double> C_grid = kDefaultCGrid, gamma_grid = kDefaultGammaGrid;
  int folds = 10;
  double weight_pos = 0;
};

void run_classify(Command& c, const ClassifyOpts& o) {
  RestInputs in(require(o.groups, "groups"));
  if (o.atlas.empty()) fail(ErrorKind::Config, "missing required option --atlas");
  const auto parc = load_parc(in.parcellation(o.parcellation));
  const auto mode = parse_feature_mode(o.mode);
  const fs::path out = require(o.out, "out");
  fs::create_directories(out);
  std::vector<AtlasSpec> atlases;
  for (const auto& p : o.atlas) atlases.push_back(load_atlas(p, &parc));
  std::vector<std::vector<std::vector<double>>> fa(atlases.size()), fb(atlases.size());
  for (const auto* group : {&in.a, &in.b})
    for (const auto& p : group->paths) {
      const auto vol = load_volume(p);
      for (std::size_t k = 0; k < atlases.size(); ++k)
        (group == &in.a ? fa : fb)[k].push_back(atlas_features(vol, atlases[k], mode));
    }
  GridSearchOptions g;
  g.C_grid = o.C_grid;
  g.gamma_grid = o.gamma_grid;
  g.k = o.folds;
  if (o.weight_pos > 0) {
    g.balanced = false;
    g.class_weight_pos = o.weight_pos;
  }
  std::vector<std::pair<std::string, Metrics>> bars;
  json summary = json::array();
  for (std::size_t k = 0; k < atlases.size(); ++k) {
    const auto& name = atlases[k].name;
    const auto X = scale_columns(group_matrix(fa[k], fb[k], in.a.ids, in.b.ids));
    const auto r = grid_search_cv(X, g, c.seed);
    auto j = grid_search_to_json(r);
    j["template"] = name;
    j["mode"] = o.mode;
    write_json(out / (name + ".json"), j);
    write_text(out / (name + "_grid.csv"), grid_search_csv(r));
    write_matrix_csv(X, out / (name + "_features.csv"));
    bars.emplace_back(name, r.best_candidate().pooled);
    summary.push_back({{"template", name}, {"best", j["best"]}});
    for (const auto& w : r.warnings) log("warning: " + w);
    log(name + ": best C=" + std::to_string(r.best_candidate().C) + " gamma=" + std::to_string(r.best_candidate().gamma) +
        " accuracy " + std::to_string(r.best_candidate().mean_accuracy));
  }
  write_text(out / "bars.csv", bar_chart_csv(bars));
  write_json(out / "summary.json", {{"seed", c.seed}, {"mode", o.mode}, {"templates", summary}});
}

struct ReportOpts {
  std::vector<std::string> rfe, atlas, expansion, clusters, classify;
  std::string out;
};

void run_report(const ReportOpts& o) {
  const fs::path out = require(o.out, "out");
  json rep{{"rfe", json::array()}, {"atlases", json::array()}, {"expansions", json::array()},
           {"clusters", json::array()}, {"classification", json::array()}};
  std::ostringstream md;
  md << "# eak report\n";
  if (!o.rfe.empty()) md << "\n## Feature selection\n\n| condition | characteristic ROIs | best CV accuracy |\n|---|---|---|\n";
  for (const auto& p : o.rfe) {
    const auto j = read_json_file(p);
    const auto n = j.at("characteristic_rois").size();
    const auto acc = j.at("roi_trace").at("best_accuracy").get<double>();
    rep["rfe"].push_back({{"file", p}, {"condition", j.value("condition", "")}, {"characteristic_rois", n}, {"best_accuracy", acc}});
    md << "| " << j.value("condition", "") << " | " << n << " | " << acc << " |\n";
  }
  for (const auto& p : o.expansion) {
    const auto j = read_json_file(p);
    rep["expansions"].push_back({{"file", p}, {"retained_voxels", j.at("hits").size()}, {"regions", j.value("n_regions", 0)}});
  }
  if (!o.atlas.empty()) md << "\n## Atlases\n\n| name | regions | sub-ROI units | expanded units | voxels |\n|---|---|---|---|---|\n";
  for (const auto& p : o.atlas) {
    const auto a = load_atlas(p);
    std::size_t sub = 0;
    for (const auto& u : a.units) sub += u.provenance == Provenance::sub_roi;
    rep["atlases"].push_back({{"file", p}, {"name", a.name}, {"regions", a.region_count()}, {"sub_roi_units", sub},
                              {"expanded_units", a.units.size() - sub}, {"voxels", a.voxel_count()}});
    md << "| " << a.name << " | " << a.region_count() << " | " << sub << " | " << a.units.size() - sub << " | "
       << a.voxel_count() << " |\n";
  }
  for (const auto& p : o.clusters) {
    const auto j = read_json_file(p);
    rep["clusters"].push_back({{"file", p}, {"n_clusters", j.at("clusters").size()}, {"q", j.value("q", 0.0)}});
    md << "\n## Clusters (" << p << ")\n\n| cluster | voxels | size (mm3) | peak MNI | regions | peak t |\n|---|---|---|---|---|---|\n";
    for (const auto& cl : j.at("clusters")) {
      const auto& pk = cl.at("peak_mni");
      md << "| " << cl.at("cluster") << " | " << cl.at("n_voxels") << " | " << cl.at("size_mm3").get<double>() << " | ("
         << pk[0].get<double>() << ", " << pk[1].get<double>() << ", " << pk[2].get<double>() << ") | "
         << cl.at("region_names").size() << " | " << cl.at(j.value("intensity", "peak_t")).get<double>() << " |\n";
    }
  }
  if (!o.classify.empty()) md << "\n## Classification\n\n| template | C | gamma | accuracy | precision | recall | F |\n|---|---|---|---|---|---|---|\n";
  for (const auto& p : o.classify) {
    const auto j = read_json_file(p);
    const auto& b = j.at("best");
    rep["classification"].push_back({{"file", p}, {"template", j.value("template", "")}, {"best", b}});
    const auto& m = b.at("pooled");
    md << "| " << j.value("template", "") << " | " << b.at("C").get<double>() << " | " << b.at("gamma").get<double>() << " | "
       << b.at("mean_accuracy").get<double>() << " | " << m.at("precision").get<double>() << " | "
       << m.at("recall").get<double>() << " | " << m.at("f_score").get<double>() << " |\n";
  }
  fs::create_directories(out);
  write_json(out / "report.json", rep);
  write_text(out / "report.md", md.str());
  log("report written to " + out.string());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Emotion atlas toolkit: block-design features, SVM-RFE, atlas building, ALFF statistics and classification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "eak 1.0");
  std::vector<std::unique_ptr<Command>> commands;

  auto add = [&](const std::string& name, const std::string& help, bool randomized) -> Command& {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(name, help);
    cmd->randomized = randomized;
    cmd->app->add_option("--config", cmd->config, "JSON config; flags override it");
    add_bound(*cmd, "--threads", cmd->threads, "worker cap (default: EAK_THREADS or all cores)");
    if (randomized) {
      auto* s = add_bound(*cmd, "--seed", cmd->seed, "random seed (required)");
      s->default_str("");
    }
    commands.push_back(std::move(cmd));
    return *commands.back();
  };

  SynthTaskOpts st;
  {
    auto& c = add("synth-task", "generate a synthetic block-design task dataset", true);
    add_bound(c, "--out", st.out, "output directory");
    add_bound(c, "--dims", st.dims, "grid nx ny nz")->expected(3);
    add_bound(c, "--regions", st.regions, "parcellation regions");
    add_bound(c, "--subjects", st.subjects, "subjects");
    add_bound(c, "--blocks", st.blocks, "blocks per condition");
    add_bound(c, "--tr", st.tr, "TR in seconds");
    add_bound(c, "--noise-sd", st.noise_sd, "Gaussian noise sd");
    add_bound(c, "--baseline", st.baseline, "signal baseline");
    add_bound(c, "--planted", st.planted, "labels of responsive regions");
    add_bound(c, "--amplitude", st.amplitude, "response amplitude");
    add_bound(c, "--planted-condition", st.planted_condition, "positive, negative or both");
    c.run = [&](Command& cmd) { run_synth_task(cmd, st); };
  }
  SynthRestOpts sr;
  {
    auto& c = add("synth-rest", "generate synthetic resting-state groups", true);
    add_bound(c, "--out", sr.out, "output directory");
    add_bound(c, "--dims", sr.dims, "grid nx ny nz")->expected(3);
    add_bound(c, "--regions", sr.regions, "parcellation regions");
    add_bound(c, "--group-a", sr.group_a, "group A (patient) size");
    add_bound(c, "--group-b", sr.group_b, "group B (control) size");
    add_bound(c, "--volumes", sr.volumes, "timepoints per run");
    add_bound(c, "--tr", sr.tr, "TR in seconds");
    add_bound(c, "--noise-sd", sr.noise_sd, "Gaussian noise sd");
    add_bound(c, "--baseline", sr.baseline, "signal baseline");
    add_bound(c, "--planted", sr.planted, "labels with extra low-frequency power in group B");
    add_bound(c, "--effect", sr.effect, "sinusoid amplitude");
    add_bound(c, "--frequency", sr.frequency, "sinusoid frequency in Hz");
    c.run = [&](Command& cmd) { run_synth_rest(cmd, sr); };
  }
  SplitOpts sp;
  {
    auto& c = add("split", "split runs into blocks and pool them by condition", false);
    add_bound(c, "--subjects", sp.subjects, "subjects manifest");
    add_bound(c, "--design", sp.design, "block design JSON (default: from manifest)");
    add_bound(c, "--out", sp.out, "output blocks JSON");
    c.run = [&](Command&) { run_split(sp); };
  }
  FeaturesOpts fe;
  {
    auto& c = add("features", "build the ROI feature matrices", false);
    add_bound(c, "--subjects", fe.subjects, "subjects manifest");
    add_bound(c, "--blocks", fe.blocks, "blocks JSON from split");
    add_bound(c, "--parcellation", fe.parcellation, "parcellation (default: from manifest)");
    add_bound(c, "--out", fe.out, "output directory");
    bind_flag(c, "--shared-normalization", fe.shared_normalization, "normalize stimulus and rest windows together");
    bind_flag(c, "--cache", fe.cache, "also write a binary matrix cache");
    c.run = [&](Command&) { run_features(fe); };
  }
  RfeOpts rf;
  {
    auto& c = add("rfe", "two-stage SVM-RFE selection of characteristic ROIs and sub-ROIs", true);
    add_bound(c, "--subjects", rf.subjects, "subjects manifest");
    add_bound(c, "--blocks", rf.blocks, "blocks JSON from split");
    add_bound(c, "--parcellation", rf.parcellation, "parcellation (default: from manifest)");
    add_bound(c, "--condition", rf.condition, "positive or negative");
    add_bound(c, "--matrix", rf.matrix, "precomputed ROI matrix CSV");
    add_bound(c, "--folds", rf.folds, "cross-validation folds");
    add_bound(c, "--C", rf.C, "SVM cost");
    add_bound(c, "--roi-schedule", rf.roi_schedule, "'one' or a fraction per iteration");
    add_bound(c, "--voxel-schedule", rf.voxel_schedule, "'one' or a fraction per iteration");
    add_bound(c, "--tie-rule", rf.tie_rule, "lowest_hinge, fewest_features or most_features");
    bind_flag(c, "--stage1-only", rf.stage1_only, "skip the voxel stage");
    bind_flag(c, "--shared-normalization", rf.shared_normalization, "normalize stimulus and rest windows together");
    add_bound(c, "--out", rf.out, "output directory");
    c.run = [&](Command& cmd) { run_rfe(cmd, rf); };
  }
  FcOpts fc;
  {
    auto& c = add("fc-expand", "recruit voxels correlated with the characteristic sub-ROIs", false);
    add_bound(c, "--subjects", fc.subjects, "subjects manifest");
    add_bound(c, "--blocks", fc.blocks, "blocks JSON from split");
    add_bound(c, "--parcellation", fc.parcellation, "parcellation (default: from manifest)");
    add_bound(c, "--rfe", fc.rfe, "rfe.json");
    add_bound(c, "--condition", fc.condition, "positive or negative (default: from rfe.json)");
    add_bound(c, "--threshold", fc.threshold, "retain voxels with r above this");
    bind_flag(c, "--include-rest", fc.include_rest, "append rest windows to the reference series");
    add_bound(c, "--out", fc.out, "output JSON");
    c.run = [&](Command&) { run_fc_expand(fc); };
  }
  AtlasOpts at;
  {
    auto& c = add("atlas-build", "assemble an atlas from sub-ROIs and expanded voxels", false);
    add_bound(c, "--rfe", at.rfe, "rfe.json");
    add_bound(c, "--expansion", at.expansion, "fc-expand output (optional)");
    add_bound(c, "--parcellation", at.parcellation, "parcellation");
    add_bound(c, "--name", at.name, "atlas name (default PEA/NEA by condition)");
    add_bound(c, "--out", at.out, "output atlas JSON");
    c.run = [&](Command&) { run_atlas_build(at); };
  }
  AlffOpts al;
  {
    auto& c = add("alff", "per-subject ALFF maps", false);
    add_bound(c, "--groups", al.groups, "groups manifest");
    add_bound(c, "--parcellation", al.parcellation, "parcellation (default: from manifest)");
    add_bound(c, "--atlas", al.atlas, "restrict to the atlas voxels");
    add_bound(c, "--band-lo", al.band_lo, "band lower edge in Hz");
    add_bound(c, "--band-hi", al.band_hi, "band upper edge in Hz");
    bind_flag(c, "--smooth", al.smooth, "Gaussian smoothing, FWHM 4 mm, before ALFF");
    add_bound(c, "--out", al.out, "output directory");
    c.run = [&](Command&) { run_alff(al); };
  }
  GroupStatsOpts gs;
  {
    auto& c = add("group-stats", "voxelwise Welch t-test, FDR and clusters", false);
    add_bound(c, "--maps", gs.maps, "maps.json from alff");
    add_bound(c, "--parcellation", gs.parcellation, "parcellation (default: from maps.json)");
    add_bound(c, "--q", gs.q, "FDR level");
    add_bound(c, "--connectivity", gs.connectivity, "6, 18 or 26");
    add_bound(c, "--out", gs.out, "output directory");
    c.run = [&](Command&) { run_group_stats(gs); };
  }
  ClassifyOpts cl;
  {
    auto& c = add("classify", "RBF SVM grid search on atlas features", true);
    add_bound(c, "--groups", cl.groups, "groups manifest");
    add_bound(c, "--parcellation", cl.parcellation, "parcellation (default: from manifest)");
    add_bound(c, "--atlas", cl.atlas, "atlas JSON (repeatable)");
    add_bound(c, "--mode", cl.mode, "alff_per_unit, mean_activation_per_unit or fc_upper_triangle");
    add_bound(c, "--C-grid", cl.C_grid, "cost values");
    add_bound(c, "--gamma-grid", cl.gamma_grid, "RBF gamma values");
    add_bound(c, "--folds", cl.folds, "cross-validation folds");
    add_bound(c, "--weight-pos", cl.weight_pos, "positive-class cost weight (default n_neg/n_pos)");
    add_bound(c, "--out", cl.out, "output directory");
    c.run = [&](Command& cmd) { run_classify(cmd, cl); };
  }
  ReportOpts rp;
  {
    auto& c = add("report", "summarize pipeline outputs", false);
    add_bound(c, "--rfe", rp.rfe, "rfe.json files");
    add_bound(c, "--atlas", rp.atlas, "atlas files");
    add_bound(c, "--expansion", rp.expansion, "fc-expand files");
    add_bound(c, "--clusters", rp.clusters, "clusters.json files");
    add_bound(c, "--classify", rp.classify, "per-template classification JSON files");
    add_bound(c, "--out", rp.out, "output directory");
    c.run = [&](Command&) { run_report(rp); };
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  for (auto& c : commands) {
    if (!c->app->parsed()) continue;
    try {
      for (auto& b : c->bindings)
        if (b.key == "seed" && b.opt->count() > 0) c->seed_given = true;
      apply_config(*c);
      if (c->randomized && !c->seed_given) fail(ErrorKind::Config, c->app->get_name() + " requires --seed");
      if (c->threads > 0) set_max_threads(c->threads);
      c->run(*c);
      return 0;
    } catch (const Error& e) {
      log(std::string(to_string(e.kind())) + ": " + e.what());
      return exit_code(e.kind());
    } catch (const fs::filesystem_error& e) {
      log(std::string("filesystem: ") + e.what());
      return 3;
    } catch (const std::exception& e) {
      log(std::string("error: ") + e.what());
      return 4;
    }
  }
  return 2;
}
