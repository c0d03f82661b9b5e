#pragma once

// End-to-end stage pipeline: generate -> (partition / substitute) ->
// schedule -> simulate, plus report rendering, report diffs and profile
// calibration.

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scad/dag.hpp"
#include "scad/heft.hpp"
#include "scad/instantiate.hpp"
#include "scad/partition.hpp"
#include "scad/sim.hpp"
#include "scad/workload.hpp"

namespace scad {

enum class Stage : std::uint8_t { linux_ts, static_rt, jit, jit_accel, jit_accel_custom, jit_accel_custom_iter };

inline constexpr std::array<Stage, 6> kAllStages{Stage::linux_ts,  Stage::static_rt,        Stage::jit,
                                                 Stage::jit_accel, Stage::jit_accel_custom, Stage::jit_accel_custom_iter};

inline std::string_view to_string(Stage s) {
  constexpr std::string_view names[] = {"linux-ts",  "static-rt",        "jit",
                                        "jit+accel", "jit+accel+custom", "jit+accel+custom+iter"};
  return names[static_cast<int>(s)];
}

inline std::optional<Stage> parse_stage(std::string_view s) {
  for (auto st : kAllStages)
    if (to_string(st) == s) return st;
  return std::nullopt;
}

/// Position of the stage in the six-segment experiment (1-based).
inline int segment_of(Stage s) { return static_cast<int>(s) + 1; }

inline Policy stage_policy(Stage s) {
  switch (s) {
    case Stage::linux_ts: return Policy::TIME_SHARING;
    case Stage::static_rt: return Policy::STATIC_RT;
    default: return Policy::JIT_RT;
  }
}

inline DlaMode stage_dla_mode(Stage s) {
  if (s == Stage::jit_accel) return DlaMode::fallback;
  if (s >= Stage::jit_accel_custom) return DlaMode::native;
  return DlaMode::none;
}

inline std::string profile_name(Stage s, const std::string& app) {
  return "segment" + std::to_string(segment_of(s)) + "-" + app;
}

/// Module columns in report order.
inline constexpr std::array<Category, 8> kReportOrder{
    Category::Sensing,  Category::Perception3D, Category::Perception2D, Category::Localization,
    Category::Tracking, Category::Prediction,   Category::Planning,     Category::Control};

struct StageOptions {
  std::filesystem::path profile_dir = default_profile_dir();
  std::filesystem::path model_dir = "fixtures";
  std::string support_profile = "dla.prof";
  Platform platform = default_platform();
  double horizon_ms = 60000.0;
  std::uint64_t seed = 7;
  std::optional<Policy> policy;  // overrides the stage's policy
  SearchOptions search = [] {
    SearchOptions o;
    o.candidate_horizon_ms = 10000.0;
    return o;
  }();
  int max_iters = 5;
  bool pad_backbone = false;
};

struct StageRun {
  std::string app;
  Stage stage = Stage::linux_ts;
  CostProfile profile;
  WorkloadSpec spec;
  Dag dag;
  SimConfig cfg;
  Schedule schedule;
  SimResult result;
  std::optional<PartitionPlan> detector_plan;
  std::optional<SearchResult> search;
  std::vector<Score> best_seen;  // iterative stage only
  int iterations = 0;
  json assignment = nullptr;
};

namespace detail {

/// Rewrites detector DLA costs (and device plans) for the stage's
/// partition of the detector model.
inline PartitionPlan apply_partition(StageRun& run, const StageOptions& o) {
  const auto model_path = o.model_dir / (run.spec.model_name() + ".lg");
  auto model = load_layer_graph(model_path.string());
  const auto prof = load_support_profile((o.model_dir / o.support_profile).string());
  if (run.spec.dla == DlaMode::native) {
    auto sub = substitute(model, {leaky_relu_to_relu()}, &prof);
    model = std::move(sub.graph);
  }
  const double penalty = run.cfg.switch_penalty_ms;
  auto plan = partition(model, prof, penalty);
  auto both = run.spec;
  both.dla = DlaMode::native;
  const auto reference = calibrate(run.profile, both);
  if (run.spec.dla == DlaMode::native && !plan.feasible)
    throw Error("model " + model.name + " is not DLA-resident after substitution");
  for (auto& n : run.dag.nodes) {
    if (n.category != Category::Perception2D || !n.eligibility.contains(ProcKind::DLA)) continue;
    const auto& row = reference.at(n.id);
    const double dla = row.at(ProcKind::DLA), gpu = row.at(ProcKind::GPU);
    n.costs[ProcKind::DLA] = derive_costs(plan, segment_costs(model, plan, dla, gpu), penalty);
    if (plan.segments.size() > 1) run.cfg.device_plans[n.id] = phase_plan(model, plan, prof, dla, gpu, penalty);
  }
  return plan;
}

}  // namespace detail

/// Workload, simulator settings and detector partition for a stage,
/// without scheduling.
inline StageRun prepare_stage(const std::string& app, Stage stage, const StageOptions& o,
                              const CostProfile* profile = nullptr) {
  StageRun run;
  run.app = app;
  run.stage = stage;
  run.profile = profile ? *profile : load_profile(profile_name(stage, app), o.profile_dir);
  run.spec = standard_app(app);
  run.spec.dla = stage_dla_mode(stage);
  run.spec.pad_backbone = o.pad_backbone;
  run.spec.cost_profile = run.profile.name;
  run.dag = generate(run.spec, run.profile);
  run.cfg = run.profile.sim;
  run.cfg.policy.policy = o.policy.value_or(stage_policy(stage));
  run.cfg.horizon_ms = o.horizon_ms;
  run.cfg.seed = o.seed;
  if (run.spec.dla != DlaMode::none) run.detector_plan = detail::apply_partition(run, o);
  return run;
}

inline StageRun run_stage(const std::string& app, Stage stage, const StageOptions& o,
                          const CostProfile* profile = nullptr) {
  auto run = prepare_stage(app, stage, o, profile);
  const auto& pl = o.platform;
  if (stage <= Stage::jit) {
    run.schedule = schedule_heft(run.dag, pl);
  } else if (stage == Stage::jit_accel_custom_iter) {
    auto it = iterate_corun_schedule(run.dag, pl, run.cfg, o.max_iters, o.search);
    run.schedule = it.best.schedule;
    run.best_seen = it.best_seen;
    run.iterations = it.iterations;
    run.assignment = assignment_json(run.dag, pl, it.initial.space, it.best.assignment);
    run.search = std::move(it.initial);
  } else {
    run.search = schedule_by_instantiation(run.dag, pl, run.cfg, o.search);
    run.schedule = run.search->winner().schedule;
    run.assignment = assignment_json(run.dag, pl, run.search->space, run.search->winner().assignment);
  }
  run.result = simulate(run.dag, pl, run.schedule, run.cfg);
  return run;
}

// ---------------------------------------------------------------------------
// reports
// ---------------------------------------------------------------------------

/// Module with the largest miss rate (ties: worst p99 / deadline), or
/// nullopt when nothing misses.
inline std::optional<Category> sluggish_module(const MissReport& m) {
  const ModuleStats* best = nullptr;
  auto ratio = [](const ModuleStats& s) {
    return s.timed_out ? std::numeric_limits<double>::infinity() : s.p99_ms / s.deadline_ms;
  };
  for (const auto& s : m.modules) {
    if (s.miss_rate <= 0.0) continue;
    if (!best || s.miss_rate > best->miss_rate || (s.miss_rate == best->miss_rate && ratio(s) > ratio(*best)))
      best = &s;
  }
  return best ? std::optional<Category>(best->category) : std::nullopt;
}

inline json run_json(const StageRun& r) {
  auto misses = to_json(r.result.misses);
  for (auto& m : misses["modules"]) {
    auto cat = *parse_category(m["module"].get<std::string>());
    auto it = r.profile.table_ms.find(cat);
    if (it != r.profile.table_ms.end()) m["table_ms"] = it->second ? json(*it->second) : json("timeout");
  }
  auto slug = sluggish_module(r.result.misses);
  double worst = 0.0;
  for (const auto& m : r.result.misses.modules) worst = std::max(worst, m.miss_rate);
  json j = {{"app", r.app},
            {"stage", to_string(r.stage)},
            {"segment", segment_of(r.stage)},
            {"profile", r.profile.name},
            {"policy", to_string(r.cfg.policy.policy)},
            {"nodes", r.dag.nodes.size()},
            {"modules", misses["modules"]},
            {"starved", misses["starved"]},
            {"overall_miss_rate", misses["overall_miss_rate"]},
            {"sluggish", slug ? json(std::string(to_string(*slug))) : json(nullptr)},
            {"miss_rate", detail::finite_or_null(worst)},
            {"energy", to_json(r.result.energy)},
            {"assignment", r.assignment}};
  if (r.search) {
    j["candidates"] = r.search->candidates.size();
    j["space_size"] = r.search->space.full_size;
  }
  if (r.detector_plan) {
    j["detector_partition"] = {{"segments", r.detector_plan->segments.size()},
                               {"fallback_count", r.detector_plan->fallback_count},
                               {"unsupported_runs", r.detector_plan->unsupported_runs},
                               {"feasible", r.detector_plan->feasible}};
  }
  if (!r.best_seen.empty()) {
    json seen = json::array();
    for (const auto& s : r.best_seen) seen.push_back(to_json(s));
    j["iterations"] = r.iterations;
    j["best_seen"] = seen;
  }
  return j;
}

namespace detail {

inline std::string fmt(double v, int prec = 1) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(prec) << v;
  return os.str();
}

inline std::string short_name(Category c) {
  switch (c) {
    case Category::Perception2D: return "2D";
    case Category::Perception3D: return "3D";
    case Category::Localization: return "Loc";
    case Category::Tracking: return "Track";
    case Category::Prediction: return "Pred";
    case Category::Planning: return "Plan";
    case Category::Control: return "Ctrl";
    default: return std::string(to_string(c));
  }
}

/// Code points in a UTF-8 string.
inline std::size_t display_width(const std::string& s) {
  return static_cast<std::size_t>(
      std::count_if(s.begin(), s.end(), [](char c) { return (static_cast<unsigned char>(c) & 0xC0) != 0x80; }));
}

/// Left-aligned first columns, right-aligned rest, two-space gutters.
inline std::string render_table(const std::vector<std::vector<std::string>>& rows, std::size_t left_cols) {
  std::vector<std::size_t> width;
  for (const auto& r : rows)
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (width.size() <= i) width.push_back(0);
      width[i] = std::max(width[i], display_width(r[i]));
    }
  std::ostringstream os;
  for (const auto& r : rows) {
    std::string line;
    for (std::size_t i = 0; i < r.size(); ++i) {
      if (i) line += "  ";
      const auto pad = std::string(width[i] - display_width(r[i]), ' ');
      line += i < left_cols ? r[i] + pad : pad + r[i];
    }
    while (!line.empty() && line.back() == ' ') line.pop_back();
    os << line << "\n";
  }
  return os.str();
}

}  // namespace detail

/// Module-latency table: one row per run, "mean±std" per module, '*' on
/// modules sharing the worst miss rate, "inf" for timeouts.
inline std::string report_table(const json& report) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> head{"app", "stage"};
  for (auto c : kReportOrder) head.push_back(detail::short_name(c));
  head.push_back("Miss");
  rows.push_back(head);
  for (const auto& run : report["runs"]) {
    std::vector<std::string> row{run["app"], run["stage"]};
    const double worst = run["miss_rate"].is_null() ? 1.0 : run["miss_rate"].get<double>();
    for (auto c : kReportOrder) {
      std::string cell = "-";
      for (const auto& m : run["modules"]) {
        if (m["module"] != to_string(c)) continue;
        cell = m["timeout"].get<bool>() ? "inf"
                                        : detail::fmt(m["latency_mean_ms"].get<double>()) + "±" +
                                              detail::fmt(m["latency_std_ms"].get<double>());
        if (worst > 0.0 && m["miss_rate"].get<double>() == worst) cell = "*" + cell;
      }
      row.push_back(cell);
    }
    row.push_back(detail::fmt(100.0 * worst, 0) + "%");
    rows.push_back(row);
  }
  return detail::render_table(rows, 2);
}

// ---------------------------------------------------------------------------
// experiment plans
// ---------------------------------------------------------------------------

struct ExperimentPlan {
  std::string name = "experiment";
  std::vector<std::string> apps;
  std::vector<Stage> stages;
  StageOptions options;
  int jobs = 1;
};

inline Platform load_platform_file(const std::string& path) {
  auto j = detail::parse_json(read_text_file(path));
  if (j.contains("nodes")) {
    auto doc = load_document_json(j);
    if (!doc.platform) throw Error(path + ": document has no platform");
    return *doc.platform;
  }
  return platform_from_json(j);
}

inline ExperimentPlan plan_from_json(const json& j, const std::filesystem::path& base = ".") {
  using namespace detail;
  only_keys(j, "plan", {"name", "apps", "stages", "platform", "horizon_ms", "seed", "profile_dir", "model_dir",
                        "policy", "candidate_horizon_ms", "max_iters", "bound", "symmetry", "reenumerate",
                        "pad_backbone", "jobs"});
  ExperimentPlan p;
  auto path_of = [&](const std::string& s) { return std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s; };
  if (j.contains("name")) p.name = get_string(j["name"], "plan.name");
  const auto& apps = need(j, "plan", "apps");
  if (apps.is_string() && apps == "all") p.apps = standard_apps();
  else if (apps.is_array())
    for (const auto& a : apps) {
      auto name = get_string(a, "plan.apps");
      standard_app(name);
      p.apps.push_back(name);
    }
  else throw ParseError("plan.apps", "expected \"all\" or a list of application names");
  const auto& stages = need(j, "plan", "stages");
  if (stages.is_string() && stages == "all") p.stages.assign(kAllStages.begin(), kAllStages.end());
  else if (stages.is_array())
    for (const auto& s : stages) {
      auto st = parse_stage(get_string(s, "plan.stages"));
      if (!st) throw ParseError("plan.stages", "unknown stage '" + s.get<std::string>() + "'");
      p.stages.push_back(*st);
    }
  else throw ParseError("plan.stages", "expected \"all\" or a list of stage names");
  auto& o = p.options;
  o.profile_dir = base / "profiles";
  o.model_dir = base / "fixtures";
  if (j.contains("platform")) o.platform = load_platform_file(path_of(get_string(j["platform"], "plan.platform")).string());
  if (j.contains("profile_dir")) o.profile_dir = path_of(get_string(j["profile_dir"], "plan.profile_dir"));
  if (j.contains("model_dir")) o.model_dir = path_of(get_string(j["model_dir"], "plan.model_dir"));
  if (j.contains("horizon_ms")) o.horizon_ms = get_number(j["horizon_ms"], "plan.horizon_ms");
  if (j.contains("seed")) o.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("policy")) {
    auto pol = parse_policy(get_string(j["policy"], "plan.policy"));
    if (!pol) throw ParseError("plan.policy", "unknown policy");
    o.policy = pol;
  }
  if (j.contains("candidate_horizon_ms"))
    o.search.candidate_horizon_ms = get_number(j["candidate_horizon_ms"], "plan.candidate_horizon_ms");
  if (j.contains("max_iters")) o.max_iters = static_cast<int>(get_number(j["max_iters"], "plan.max_iters"));
  if (j.contains("bound")) o.search.bound = static_cast<std::size_t>(get_number(j["bound"], "plan.bound"));
  if (j.contains("symmetry")) o.search.symmetry = j["symmetry"].get<bool>();
  if (j.contains("reenumerate")) o.search.reenumerate = j["reenumerate"].get<bool>();
  if (j.contains("pad_backbone")) o.pad_backbone = j["pad_backbone"].get<bool>();
  if (j.contains("jobs")) p.jobs = static_cast<int>(get_number(j["jobs"], "plan.jobs"));
  return p;
}

inline ExperimentPlan load_plan(const std::string& path) {
  auto p = plan_from_json(detail::parse_json(read_text_file(path)), std::filesystem::path(path).parent_path());
  if (p.name == "experiment") p.name = std::filesystem::path(path).stem().string();
  return p;
}

struct ExperimentReport {
  json doc;
  std::string table;
};

/// Runs every (app, stage) pair; rows are ordered app-major, stage-minor
/// regardless of how many run concurrently.
inline ExperimentReport run_experiment(const ExperimentPlan& plan) {
  std::vector<std::pair<std::string, Stage>> cells;
  for (const auto& a : plan.apps)
    for (auto s : plan.stages) cells.emplace_back(a, s);
  std::vector<json> runs(cells.size());
  auto opts = plan.options;
  if (plan.jobs > 1 && cells.size() > 1) opts.search.jobs = 1;
  else opts.search.jobs = std::max(1, plan.jobs);
  parallel_for(cells.size(), cells.size() > 1 ? plan.jobs : 1, [&](std::size_t i) {
    const auto& [app, stage] = cells[i];
    try {
      runs[i] = run_json(run_stage(app, stage, opts));
    } catch (const std::exception& e) {
      throw Error("[" + app + "/" + std::string(to_string(stage)) + "] " + e.what());
    }
  });
  ExperimentReport r;
  r.doc = {{"version", 1},
           {"plan", plan.name},
           {"horizon_ms", opts.horizon_ms},
           {"seed", opts.seed},
           {"runs", runs}};
  r.table = report_table(r.doc);
  return r;
}

/// Signed per-module deltas b - a for runs paired by position.
inline json diff_reports(const json& a, const json& b) {
  const auto& ra = a.at("runs");
  const auto& rb = b.at("runs");
  if (ra.size() != rb.size()) throw Error("reports differ in run count: " + std::to_string(ra.size()) + " vs " +
                                          std::to_string(rb.size()));
  json pairs = json::array();
  for (std::size_t i = 0; i < ra.size(); ++i) {
    if (ra[i]["app"] != rb[i]["app"] || ra[i]["nodes"] != rb[i]["nodes"])
      throw Error("mismatched workloads at run " + std::to_string(i) + ": " + ra[i]["app"].get<std::string>() +
                  " vs " + rb[i]["app"].get<std::string>());
    json mods = json::array();
    for (auto c : kReportOrder) {
      const json* ma = nullptr;
      const json* mb = nullptr;
      for (const auto& m : ra[i]["modules"])
        if (m["module"] == to_string(c)) ma = &m;
      for (const auto& m : rb[i]["modules"])
        if (m["module"] == to_string(c)) mb = &m;
      if (!ma || !mb) continue;
      json d = {{"category", to_string(c)},
                {"miss_rate_delta", (*mb)["miss_rate"].get<double>() - (*ma)["miss_rate"].get<double>()}};
      const auto& la = (*ma)["latency_mean_ms"];
      const auto& lb = (*mb)["latency_mean_ms"];
      if (la.is_number() && lb.is_number()) {
        d["latency_delta_ms"] = std::round((lb.get<double>() - la.get<double>()) * 1000.0) / 1000.0;
        d["latency_ratio"] = la.get<double>() > 0.0 ? json(std::round(lb.get<double>() / la.get<double>() * 1000.0) / 1000.0)
                                                    : json(nullptr);
      } else {
        d["latency_delta_ms"] = nullptr;
        d["latency_ratio"] = nullptr;
      }
      mods.push_back(d);
    }
    pairs.push_back({{"app", ra[i]["app"]}, {"a", ra[i]["stage"]}, {"b", rb[i]["stage"]}, {"modules", mods}});
  }
  return {{"version", 1}, {"pairs", pairs}};
}

inline std::string diff_table(const json& diff) {
  std::vector<std::vector<std::string>> rows{{"app", "a", "b", "module", "d_latency_ms", "ratio", "d_miss"}};
  for (const auto& p : diff["pairs"])
    for (const auto& m : p["modules"]) {
      auto num = [](const json& v, int prec) {
        if (v.is_null()) return std::string("n/a");
        const double x = v.get<double>();
        return (x > 0 ? "+" : "") + detail::fmt(x, prec);
      };
      rows.push_back({p["app"], p["a"], p["b"], detail::short_name(*parse_category(m["category"].get<std::string>())),
                      num(m["latency_delta_ms"], 1),
                      m["latency_ratio"].is_null() ? "n/a" : detail::fmt(m["latency_ratio"].get<double>(), 2),
                      num(m["miss_rate_delta"], 3)});
    }
  return detail::render_table(rows, 4);
}

// ---------------------------------------------------------------------------
// calibration
// ---------------------------------------------------------------------------

/// Modules whose simulated mean is fitted to the profile's module time.
/// Perception3D is queue-bound behind the detectors on a shared GPU until
/// the detectors leave it, so it is fitted only from segment 5 on.
inline std::vector<Category> calibrated_modules(const CostProfile& p) {
  std::vector<Category> out;
  for (auto c : {Category::Sensing, Category::Perception2D, Category::Perception3D, Category::Localization}) {
    if (c == Category::Perception3D && p.segment < 5) continue;
    auto it = p.table_ms.find(c);
    if (it == p.table_ms.end() || !it->second) continue;
    out.push_back(c);
  }
  return out;
}

struct CalibrationLog {
  std::vector<std::map<Category, double>> measured;  // per round
  std::size_t chosen = 0;                           // round of the returned profile
  bool converged = false;
};

/// Rescales divisors until each calibrated module's simulated mean is
/// within `tol` (relative) of its target; otherwise returns the closest
/// profile seen. Modules sharing a core pull on each other, so each round
/// slow after a 1.3x speedup step that gained under 5% sits on a queueing
/// floor and is frozen.
inline CostProfile calibrate_profile(CostProfile p, const StageOptions& o, int rounds = 16, double tol = 0.02,
                                     CalibrationLog* log = nullptr) {
  if (p.segment < 1 || p.segment > 6) throw Error("profile " + p.name + " has no segment");
  const Stage stage = kAllStages[p.segment - 1];
  auto spec = standard_app(p.app);
  spec.dla = DlaMode::native;
  const auto bp = blueprint(spec);
  std::map<Category, double> previous, step;
  std::set<Category> frozen;
  CostProfile best = p;
  double best_err = std::numeric_limits<double>::infinity();
  for (int round = 0; round < rounds; ++round) {
    auto run = run_stage(p.app, stage, o, &p);
    std::map<Category, double> measured;
    bool done = true;
    double err = 0.0;
    for (auto c : calibrated_modules(p))
      if (const auto* m = run.result.misses.module(c))
        err = std::max(err, m->timed_out ? std::numeric_limits<double>::infinity()
                                         : std::abs(m->mean_ms / *p.table_ms.at(c) - 1.0));
    if (err < best_err) {
      best_err = err;
      best = p;
      if (log) log->chosen = static_cast<std::size_t>(round);
    }
    for (auto c : calibrated_modules(p)) {
      const auto* m = run.result.misses.module(c);
      if (!m) continue;
      const double target = *p.table_ms.at(c);
      const double got = m->timed_out ? std::numeric_limits<double>::infinity() : m->mean_ms;
      measured[c] = got;
      if (std::abs(got - target) <= tol * target) continue;
      if (auto it = previous.find(c); it != previous.end() && got > target && step[c] >= 1.3 &&
                                      it->second - got < 0.05 * it->second)
        frozen.insert(c);
      previous[c] = got;
      step[c] = 1.0;
      if (frozen.count(c)) continue;
      done = false;
      const double factor = std::clamp(std::pow(got / target, 0.7), 0.5, 2.0);
      step[c] = factor;
      for (const auto& r : bp.tasks) {
        if (r.category != c || r.pass_through) continue;
        for (auto k : r.kinds.kinds()) {
          auto& d = p.divisors[c][k];
          if (d == 0.0) d = 1.0;
        }
      }
      for (auto& [k, d] : p.divisors[c]) d = std::round(d * factor * 1e4) / 1e4;
    }
    if (log) log->measured.push_back(measured);
    if (done) {
      if (log) log->converged = frozen.empty();
      return frozen.empty() ? p : best;
    }
  }
  return best;
}

}  // namespace scad
