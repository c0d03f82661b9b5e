#pragma once

// Autonomous-driving application DAGs over a fixed backbone, plus the
// cost profiles that specialise them.

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "scad/dag.hpp"
#include "scad/partition.hpp"
#include "scad/sim.hpp"

namespace scad {

enum class ModelFamily : std::uint8_t { Yolo, SPP };

inline std::string_view to_string(ModelFamily f) { return f == ModelFamily::Yolo ? "Yolo-v3" : "SPP-v3"; }

/// How 2D models may use the DLA: not at all, with GPU fallback for the
/// unsupported layers, or natively after op substitution.
enum class DlaMode : std::uint8_t { none, fallback, native };

inline std::string_view to_string(DlaMode m) {
  constexpr std::string_view names[] = {"none", "fallback", "native"};
  return names[static_cast<int>(m)];
}

struct SourceRates {
  double camera_hz = 30.0;
  double lidar_hz = 10.0;
  double gnss_hz = 100.0;
  double planning_hz = 10.0;
  double control_hz = 100.0;
};

struct WorkloadSpec {
  std::string app_name = "custom";
  int num_2d_streams = 1;
  ModelFamily family = ModelFamily::Yolo;
  int resolution = 288;
  std::string cost_profile = "unit";
  SourceRates rates;
  bool fusion_2d = true;
  DlaMode dla = DlaMode::none;
  bool pad_backbone = false;  // add the ten zero-cost pass-through nodes

  std::string model_name() const {
    return std::string(family == ModelFamily::Yolo ? "yolov3-" : "yolov3-spp-") + std::to_string(resolution);
  }
  std::string detector_prefix() const { return family == ModelFamily::Yolo ? "yolo_" : "spp_"; }
};

inline const std::vector<std::string>& standard_apps() {
  static const std::vector<std::string> apps{"ADy288", "ADy416", "ADy608", "ADs288", "ADs416", "ADs608"};
  return apps;
}

inline WorkloadSpec standard_app(std::string_view name) {
  WorkloadSpec s;
  s.app_name = std::string(name);
  if (name.size() != 6 || name.substr(0, 2) != "AD" || (name[2] != 'y' && name[2] != 's'))
    throw Error("unknown application '" + s.app_name + "' (expected one of ADy288 ADy416 ADy608 ADs288 ADs416 ADs608)");
  s.family = name[2] == 'y' ? ModelFamily::Yolo : ModelFamily::SPP;
  const auto res = name.substr(3);
  if (res == "288") s.num_2d_streams = 10;
  else if (res == "416") s.num_2d_streams = 5;
  else if (res == "608") s.num_2d_streams = 3;
  else throw Error("unknown application '" + s.app_name + "'");
  s.resolution = std::stoi(std::string(res));
  return s;
}

// ---------------------------------------------------------------------------
// cost profiles
// ---------------------------------------------------------------------------

struct CostProfile {
  std::string name = "unit";
  std::string app;
  int segment = 0;
  /// Target module times; nullopt marks a timeout entry.
  std::map<Category, std::optional<double>> table_ms;
  /// Module times the task costs are derived from.
  std::map<Category, double> module_ms;
  /// Effective parallelism per module and processor kind: a task's cost on
  /// kind k is share * module_ms / divisor[k].
  std::map<Category, std::map<ProcKind, double>> divisors;
  bool unit = false;  // every task costs 1 ms
  SimConfig sim;

  double divisor(Category c, ProcKind k) const {
    auto it = divisors.find(c);
    if (it == divisors.end()) return 1.0;
    auto jt = it->second.find(k);
    return jt == it->second.end() ? 1.0 : jt->second;
  }
};

inline CostProfile unit_profile() {
  CostProfile p;
  p.unit = true;
  return p;
}

namespace detail {

inline json category_map_json(const std::map<Category, double>& m) {
  json j = json::object();
  for (const auto& [c, v] : m) j[std::string(to_string(c))] = v;
  return j;
}

inline Category need_category(const std::string& key, const std::string& where) {
  auto c = parse_category(key);
  if (!c) throw ParseError(where, "unknown module category '" + key + "'");
  return *c;
}

}  // namespace detail

inline json sim_config_to_json(const SimConfig& c) {
  json by_cat = json::object();
  for (const auto& [cat, v] : c.assistant_fraction_by_category) by_cat[std::string(to_string(cat))] = v;
  return {{"gpu_corun_slope", c.gpu_corun_slope},
          {"dla_corun_slope", c.dla_corun_slope},
          {"host_fraction", c.host_fraction},
          {"assistant_fraction", c.assistant_fraction},
          {"assistant_fraction_by_category", by_cat},
          {"noise_sigma", c.noise_sigma},
          {"quantum_ms", c.policy.quantum_ms},
          {"slack_factor", c.policy.slack_factor},
          {"switch_penalty_ms", c.switch_penalty_ms},
          {"drop_oldest", c.drop_oldest}};
}

inline void sim_config_from_json(const json& j, SimConfig& c, const std::string& where) {
  detail::only_keys(j, where, {"gpu_corun_slope", "dla_corun_slope", "host_fraction", "assistant_fraction",
                               "assistant_fraction_by_category", "noise_sigma", "quantum_ms", "slack_factor",
                               "switch_penalty_ms", "drop_oldest"});
  auto num = [&](const char* key, double& out) {
    if (j.contains(key)) out = detail::get_number(j[key], where + "." + key);
  };
  num("gpu_corun_slope", c.gpu_corun_slope);
  num("dla_corun_slope", c.dla_corun_slope);
  num("host_fraction", c.host_fraction);
  num("assistant_fraction", c.assistant_fraction);
  num("noise_sigma", c.noise_sigma);
  num("quantum_ms", c.policy.quantum_ms);
  num("slack_factor", c.policy.slack_factor);
  num("switch_penalty_ms", c.switch_penalty_ms);
  if (j.contains("drop_oldest")) {
    if (!j["drop_oldest"].is_boolean()) throw ParseError(where + ".drop_oldest", "expected boolean");
    c.drop_oldest = j["drop_oldest"].get<bool>();
  }
  if (j.contains("assistant_fraction_by_category")) {
    const auto& m = j["assistant_fraction_by_category"];
    if (!m.is_object()) throw ParseError(where + ".assistant_fraction_by_category", "expected object");
    for (auto it = m.begin(); it != m.end(); ++it)
      c.assistant_fraction_by_category[detail::need_category(it.key(), where)] =
          detail::get_number(*it, where + ".assistant_fraction_by_category." + it.key());
  }
}

inline json to_json(const CostProfile& p) {
  json table = json::object();
  for (const auto& [c, v] : p.table_ms) table[std::string(to_string(c))] = v ? json(*v) : json(nullptr);
  json div = json::object();
  for (const auto& [c, m] : p.divisors) {
    json k = json::object();
    for (const auto& [kind, v] : m) k[std::string(to_string(kind))] = v;
    div[std::string(to_string(c))] = k;
  }
  return {{"name", p.name},
          {"app", p.app},
          {"segment", p.segment},
          {"table_ms", table},
          {"module_ms", detail::category_map_json(p.module_ms)},
          {"divisors", div},
          {"sim", sim_config_to_json(p.sim)}};
}

inline CostProfile profile_from_json(const json& j, const std::string& where = "profile") {
  if (!j.is_object()) throw ParseError(where, "expected object");
  detail::only_keys(j, where, {"name", "app", "segment", "table_ms", "module_ms", "divisors", "sim"});
  CostProfile p;
  p.name = detail::get_string(detail::need(j, where, "name"), where + ".name");
  if (j.contains("app")) p.app = detail::get_string(j["app"], where + ".app");
  if (j.contains("segment")) p.segment = static_cast<int>(detail::get_number(j["segment"], where + ".segment"));
  if (j.contains("table_ms"))
    for (auto it = j["table_ms"].begin(); it != j["table_ms"].end(); ++it)
      p.table_ms[detail::need_category(it.key(), where)] =
          it->is_null() ? std::nullopt : std::optional<double>(detail::get_number(*it, where + ".table_ms." + it.key()));
  const auto& mod = detail::need(j, where, "module_ms");
  for (auto it = mod.begin(); it != mod.end(); ++it) {
    const double v = detail::get_number(*it, where + ".module_ms." + it.key());
    if (v < 0.0) throw ParseError(where + ".module_ms." + it.key(), "negative time");
    p.module_ms[detail::need_category(it.key(), where)] = v;
  }
  if (j.contains("divisors"))
    for (auto it = j["divisors"].begin(); it != j["divisors"].end(); ++it) {
      const auto c = detail::need_category(it.key(), where);
      for (auto kt = it->begin(); kt != it->end(); ++kt) {
        auto kind = parse_kind(kt.key());
        if (!kind) throw ParseError(where + ".divisors." + it.key(), "unknown processor kind '" + kt.key() + "'");
        const double v = detail::get_number(*kt, where + ".divisors." + it.key() + "." + kt.key());
        if (v <= 0.0) throw ParseError(where + ".divisors." + it.key() + "." + kt.key(), "divisor must be > 0");
        p.divisors[c][*kind] = v;
      }
    }
  if (j.contains("sim")) sim_config_from_json(j["sim"], p.sim, where + ".sim");
  return p;
}

inline std::filesystem::path default_profile_dir() {
  if (const char* env = std::getenv("SCAD_PROFILE_DIR")) return env;
  return "profiles";
}

inline std::vector<std::string> available_profiles(const std::filesystem::path& dir) {
  std::vector<std::string> out{"unit"};
  std::error_code ec;
  for (const auto& e : std::filesystem::directory_iterator(dir, ec))
    if (e.path().extension() == ".json") out.push_back(e.path().stem().string());
  std::sort(out.begin() + 1, out.end());
  return out;
}

inline CostProfile load_profile(const std::string& name, const std::filesystem::path& dir = default_profile_dir()) {
  if (name == "unit") return unit_profile();
  const auto path = dir / (name + ".json");
  if (!std::filesystem::exists(path)) {
    std::string list;
    for (const auto& n : available_profiles(dir)) list += (list.empty() ? "" : " ") + n;
    throw Error("unknown cost profile '" + name + "'; available: " + list);
  }
  return profile_from_json(detail::parse_json(read_text_file(path.string())), path.string());
}

// ---------------------------------------------------------------------------
// backbone
// ---------------------------------------------------------------------------

/// A task's place in the workload before costs are attached.
struct TaskRole {
  std::string id;
  Category category;
  double share = 1.0;  // fraction of the module time carried by this task
  KindSet kinds{ProcKind::CPU};
  std::optional<double> period_ms;
  int threads = 2;
  bool pass_through = false;  // fixed near-zero cost
};

struct RoleEdge {
  std::string src, dst;
  bool trigger = true;
  bool assumed = false;
  double comm_ms = 0.1;
};

struct Blueprint {
  std::vector<TaskRole> tasks;
  std::vector<RoleEdge> edges;
};

inline constexpr double kPassThroughMs = 0.01;

inline Blueprint blueprint(const WorkloadSpec& spec) {
  if (spec.num_2d_streams < 0) throw StructuralError("num_2d_streams must be >= 0");
  if (spec.num_2d_streams == 0 && spec.fusion_2d)
    throw StructuralError("2D fusion enabled but the workload has no 2D streams");
  for (double hz : {spec.rates.camera_hz, spec.rates.lidar_hz, spec.rates.gnss_hz, spec.rates.planning_hz,
                    spec.rates.control_hz})
    if (!(hz > 0.0)) throw StructuralError("source rates must be > 0");

  Blueprint b;
  auto task = [&](std::string id, Category c, double share, std::optional<double> hz = std::nullopt) -> TaskRole& {
    TaskRole r;
    r.id = std::move(id);
    r.category = c;
    r.share = share;
    if (hz) r.period_ms = 1000.0 / *hz;
    b.tasks.push_back(std::move(r));
    return b.tasks.back();
  };
  auto link = [&](std::string a, std::string d, bool trigger = true, bool assumed = false, double comm = 0.1) {
    b.edges.push_back({std::move(a), std::move(d), trigger, assumed, comm});
  };
  using C = Category;

  task("velodyne_driver", C::Sensing, 1.0, spec.rates.lidar_hz);
  task("nmea2tfpose", C::Sensing, 0.1, spec.rates.gnss_hz);
  task("voxel_grid_filter", C::Localization, 0.05);
  task("lidar_point_pillars", C::Perception3D, 1.0).kinds = {ProcKind::GPU};
  task("range_vision_fusion", C::Tracking, 0.1);
  task("imm_ukf_tracker", C::Tracking, 0.9);
  task("native_motion_predictor", C::Prediction, 0.9);
  task("costmap_generator", C::Prediction, 0.1);
  task("ndt_matching", C::Localization, 0.9);
  task("pose_relay", C::Localization, 0.05);
  task("vel_relay", C::Localization, 0.05);
  task("waypoint_replanner", C::Planning, 0.02, spec.rates.planning_hz);
  task("lane_rule", C::Planning, 0.02);
  task("lane_stop", C::Planning, 0.02);
  task("lane_select", C::Planning, 0.02);
  task("astar_avoid", C::Planning, 0.9);
  task("velocity_set", C::Planning, 0.02);
  task("pure_pursuit", C::Control, 1.0, spec.rates.control_hz);

  // fallback engines are built for a DLA core and cannot be placed on the GPU
  const KindSet detector_kinds = spec.dla == DlaMode::none       ? KindSet{ProcKind::GPU}
                                 : spec.dla == DlaMode::fallback ? KindSet{ProcKind::DLA}
                                                                 : KindSet{ProcKind::GPU, ProcKind::DLA};
  for (int k = 0; k < spec.num_2d_streams; ++k) {
    const auto cam = "camera_driver_" + std::to_string(k);
    const auto det = spec.detector_prefix() + std::to_string(k);
    task(cam, C::Sensing, 1.0, spec.rates.camera_hz);
    task(det, C::Perception2D, 1.0).kinds = detector_kinds;
    link(cam, det, true, false, 0.5);
    if (spec.fusion_2d) link(det, "range_vision_fusion");
  }

  link("velodyne_driver", "voxel_grid_filter", true, false, 2.0);
  link("velodyne_driver", "lidar_point_pillars", true, false, 0.5);
  link("lidar_point_pillars", "range_vision_fusion");
  link("range_vision_fusion", "imm_ukf_tracker");
  link("imm_ukf_tracker", "native_motion_predictor");
  link("native_motion_predictor", "costmap_generator");
  link("voxel_grid_filter", "costmap_generator", false, true);
  link("voxel_grid_filter", "ndt_matching", true, false, 2.0);
  link("nmea2tfpose", "ndt_matching", false);
  link("ndt_matching", "pose_relay", true, true);
  link("ndt_matching", "vel_relay", true, true);
  link("waypoint_replanner", "lane_rule");
  link("lane_rule", "lane_stop");
  link("lane_stop", "lane_select");
  link("lane_select", "astar_avoid");
  link("astar_avoid", "velocity_set");
  link("pose_relay", "lane_select", false, true);
  link("vel_relay", "velocity_set", false, true);
  link("costmap_generator", "astar_avoid", false);
  link("velocity_set", "pure_pursuit", false);

  if (spec.pad_backbone) {
    const std::pair<const char*, const char*> pads[] = {
        {"points_map_loader", "ndt_matching"}, {"world_to_map_tf", "ndt_matching"},
        {"map_to_mobility_tf", "ndt_matching"}, {"can_odometry", "vel_relay"},
        {"gnss_driver", "nmea2tfpose"},         {"vector_map_loader", "lane_rule"},
        {"lane_navi", "lane_rule"},             {"waypoint_loader", "waypoint_replanner"},
        {"twist_filter", "pure_pursuit"},       {"twist_gate", "pure_pursuit"}};
    for (const auto& [id, consumer] : pads) {
      auto cat = std::find_if(b.tasks.begin(), b.tasks.end(), [&](const TaskRole& r) { return r.id == consumer; })->category;
      auto& r = task(id, cat, 0.0, 10.0);
      r.pass_through = true;
      r.threads = 1;
      link(id, consumer, false, true);
    }
  }
  return b;
}

/// Per-task cost tables for `spec` under `profile`.
using CostTable = std::map<std::string, std::map<ProcKind, double>>;

inline CostTable calibrate(const CostProfile& profile, const WorkloadSpec& spec) {
  CostTable out;
  for (const auto& r : blueprint(spec).tasks) {
    auto& row = out[r.id];
    for (auto k : r.kinds.kinds()) {
      if (r.pass_through) row[k] = kPassThroughMs;
      else if (profile.unit) row[k] = 1.0;
      else {
        auto it = profile.module_ms.find(r.category);
        if (it == profile.module_ms.end())
          throw Error("profile " + profile.name + " has no time for module " + std::string(to_string(r.category)));
        row[k] = r.share * it->second / profile.divisor(r.category, k);
      }
    }
  }
  return out;
}

inline CostTable calibrate(const std::string& profile_name, const WorkloadSpec& spec) {
  return calibrate(load_profile(profile_name), spec);
}

inline Dag generate(const WorkloadSpec& spec, const CostProfile& profile) {
  const auto bp = blueprint(spec);
  const auto costs = calibrate(profile, spec);
  Dag d;
  for (const auto& r : bp.tasks) {
    TaskNode n;
    n.id = r.id;
    n.name = r.id;
    n.category = r.category;
    n.eligibility = r.kinds;
    n.costs = costs.at(r.id);
    n.period_ms = r.period_ms;
    n.deadline_ms = runs_on_reserved(r.category) ? 10.0 : 100.0;
    n.threads = r.threads;
    d.nodes.push_back(std::move(n));
  }
  for (const auto& re : bp.edges) {
    Edge e;
    e.src = re.src;
    e.dst = re.dst;
    e.trigger = re.trigger;
    e.assumed = re.assumed;
    for (auto a : kAllKinds)
      for (auto b : kAllKinds) e.comm_cost[make_pair_key(a, b)] = re.comm_ms;
    d.edges.push_back(std::move(e));
  }
  auto problems = validate(d, default_platform());
  if (!problems.empty()) throw StructuralError("generated workload is invalid: " + problems.front());
  return d;
}

inline Dag generate(const WorkloadSpec& spec) { return generate(spec, load_profile(spec.cost_profile)); }

/// Simulation settings carried by a profile (the unit profile keeps defaults).
inline SimConfig sim_config_for(const CostProfile& p) { return p.sim; }

}  // namespace scad
