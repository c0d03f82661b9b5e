#include <gtest/gtest.h>

#include <set>

#include "scad/experiment.hpp"
#include "support.hpp"

using namespace scad;
using namespace scad::testing;

namespace {

ExperimentPlan small_plan(std::vector<std::string> apps, std::vector<Stage> stages, double horizon_ms = 5000) {
  ExperimentPlan p;
  p.apps = std::move(apps);
  p.stages = std::move(stages);
  p.options.profile_dir = data_path("profiles");
  p.options.model_dir = data_path("fixtures");
  p.options.horizon_ms = horizon_ms;
  if (horizon_ms < 60000) p.options.search.candidate_horizon_ms = 2000;
  return p;
}

const json& module_of(const json& run, Category c) {
  for (const auto& m : run["modules"])
    if (m["module"] == to_string(c)) return m;
  throw std::runtime_error("module missing");
}

}  // namespace

TEST(Stages, NamesMapOneToOneOntoSegments) {
  std::set<std::string> names;
  for (auto s : kAllStages) {
    names.insert(std::string(to_string(s)));
    EXPECT_EQ(parse_stage(to_string(s)), s);
  }
  EXPECT_EQ(names.size(), 6u);
  EXPECT_EQ(segment_of(Stage::linux_ts), 1);
  EXPECT_EQ(segment_of(Stage::jit_accel_custom_iter), 6);
  EXPECT_EQ(stage_policy(Stage::linux_ts), Policy::TIME_SHARING);
  EXPECT_EQ(stage_policy(Stage::static_rt), Policy::STATIC_RT);
  EXPECT_EQ(stage_policy(Stage::jit_accel), Policy::JIT_RT);
  EXPECT_EQ(stage_dla_mode(Stage::jit), DlaMode::none);
  EXPECT_EQ(stage_dla_mode(Stage::jit_accel), DlaMode::fallback);
  EXPECT_EQ(stage_dla_mode(Stage::jit_accel_custom_iter), DlaMode::native);
  EXPECT_FALSE(parse_stage("rosch"));
}

TEST(Stages, FallbackEnginesAreBoundToDlaCores) {
  StageOptions o;
  o.profile_dir = data_path("profiles");
  o.model_dir = data_path("fixtures");
  auto run = prepare_stage("ADy608", Stage::jit_accel, o);
  ASSERT_TRUE(run.detector_plan);
  EXPECT_FALSE(run.detector_plan->feasible);
  EXPECT_EQ(run.detector_plan->fallback_count, 8);
  const auto& det = run.dag.node("yolo_0");
  EXPECT_EQ(det.eligibility, KindSet{ProcKind::DLA});
  ASSERT_TRUE(run.cfg.device_plans.count("yolo_0"));
  double phases = 0.0;
  for (const auto& ph : run.cfg.device_plans.at("yolo_0")) phases += ph.ms + ph.switch_ms;
  EXPECT_NEAR(phases, det.cost(ProcKind::DLA), 1e-9);
}

TEST(Stages, CustomizedModelsRunWholeOnTheDla) {
  StageOptions o;
  o.profile_dir = data_path("profiles");
  o.model_dir = data_path("fixtures");
  auto run = prepare_stage("ADs416", Stage::jit_accel_custom, o);
  ASSERT_TRUE(run.detector_plan);
  EXPECT_TRUE(run.detector_plan->feasible);
  EXPECT_EQ(run.detector_plan->segments.size(), 1u);
  EXPECT_TRUE(run.cfg.device_plans.empty());
  EXPECT_EQ(run.dag.node("spp_0").eligibility, (KindSet{ProcKind::GPU, ProcKind::DLA}));
}

TEST(Experiment, RerunningAPlanIsByteIdentical) {
  auto plan = small_plan({"ADy416"}, {Stage::linux_ts, Stage::jit_accel_custom});
  auto a = run_experiment(plan);
  auto b = run_experiment(plan);
  EXPECT_EQ(a.doc.dump(2), b.doc.dump(2));
  EXPECT_EQ(a.table, b.table);
  plan.jobs = 2;
  EXPECT_EQ(run_experiment(plan).doc.dump(2), a.doc.dump(2));
}

TEST(Experiment, EveryModuleAppearsExactlyOnce) {
  auto plan = small_plan({"ADs288"}, {Stage::static_rt, Stage::jit_accel});
  auto r = run_experiment(plan);
  ASSERT_EQ(r.doc["runs"].size(), 2u);
  for (const auto& run : r.doc["runs"]) {
    std::multiset<std::string> seen;
    for (const auto& m : run["modules"]) seen.insert(m["module"].get<std::string>());
    for (auto c : kReportOrder) EXPECT_EQ(seen.count(std::string(to_string(c))), 1u) << to_string(c);
    EXPECT_EQ(seen.size(), kReportOrder.size());
  }
  EXPECT_FALSE(r.doc["runs"][0]["starved"].empty());
  EXPECT_TRUE(module_of(r.doc["runs"][0], Category::Perception2D)["timeout"].get<bool>());
}

TEST(Experiment, TableColumnsLineUp) {
  auto r = run_experiment(small_plan({"ADy288"}, {Stage::linux_ts, Stage::static_rt}));
  std::istringstream in(r.table);
  std::string line;
  std::vector<std::size_t> widths;
  while (std::getline(in, line)) widths.push_back(detail::display_width(line));
  ASSERT_EQ(widths.size(), 3u);
  EXPECT_EQ(widths[0], widths[1]);
  EXPECT_EQ(widths[1], widths[2]);
  EXPECT_NE(r.table.find("inf"), std::string::npos);
}

TEST(Experiment, FailuresCarryTheStageTag) {
  auto plan = small_plan({"ADy288"}, {Stage::jit_accel});
  plan.options.model_dir = "/nonexistent";
  try {
    run_experiment(plan);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("[ADy288/jit+accel]"), std::string::npos) << e.what();
  }
}

TEST(Plans, ParseNamesAndRelativePaths) {
  auto p = plan_from_json(json::parse(R"({"apps": "all", "stages": ["jit", "jit+accel+custom+iter"],
                                          "horizon_ms": 1000, "profile_dir": "p", "policy": "STATIC_RT"})"),
                          "/base");
  EXPECT_EQ(p.apps.size(), 6u);
  EXPECT_EQ(p.stages, (std::vector<Stage>{Stage::jit, Stage::jit_accel_custom_iter}));
  EXPECT_EQ(p.options.profile_dir, std::filesystem::path("/base/p"));
  EXPECT_EQ(p.options.model_dir, std::filesystem::path("/base/fixtures"));
  EXPECT_EQ(p.options.policy, Policy::STATIC_RT);
  EXPECT_THROW(plan_from_json(json::parse(R"({"apps": ["ADy288"], "stages": ["rosch"]})")), ParseError);
  EXPECT_THROW(plan_from_json(json::parse(R"({"apps": ["ADz288"], "stages": "all"})")), Error);
  EXPECT_THROW(plan_from_json(json::parse(R"({"apps": "all", "stages": "all", "seeds": 3})")), ParseError);
}

TEST(Diff, ReportAgainstItselfIsAllZero) {
  auto r = run_experiment(small_plan({"ADy608"}, {Stage::jit, Stage::jit_accel_custom}));
  auto d = diff_reports(r.doc, r.doc);
  ASSERT_EQ(d["pairs"].size(), 2u);
  for (const auto& p : d["pairs"])
    for (const auto& m : p["modules"]) {
      EXPECT_EQ(m["miss_rate_delta"].get<double>(), 0.0);
      EXPECT_EQ(m["latency_delta_ms"].get<double>(), 0.0);
    }
  const auto table = diff_table(d);
  EXPECT_NE(table.find("ADy608"), std::string::npos);
  EXPECT_NE(table.find("2D"), std::string::npos);
}

TEST(Diff, MismatchedWorkloadsAreRejected) {
  auto a = run_experiment(small_plan({"ADy288"}, {Stage::jit}));
  auto b = run_experiment(small_plan({"ADs608"}, {Stage::jit}));
  EXPECT_THROW(diff_reports(a.doc, b.doc), Error);
  auto two = run_experiment(small_plan({"ADy288"}, {Stage::jit, Stage::linux_ts}));
  EXPECT_THROW(diff_reports(a.doc, two.doc), Error);
}

TEST(Diff, CustomizationHalvesTwoDimensionalLatency) {
  // 2-2.2x speedup from segment 4 to 5 on the five-stream applications
  for (const auto& app : {"ADy416", "ADs416"}) {
    auto a = run_experiment(small_plan({app}, {Stage::jit_accel}, 60000));
    auto b = run_experiment(small_plan({app}, {Stage::jit_accel_custom}, 60000));
    auto d = diff_reports(a.doc, b.doc);
    for (const auto& m : d["pairs"][0]["modules"])
      if (m["category"] == "Perception2D") {
        const double speedup = 1.0 / m["latency_ratio"].get<double>();
        EXPECT_GT(speedup, 1.8) << app;
        EXPECT_LT(speedup, 2.4) << app;
        EXPECT_LT(m["latency_delta_ms"].get<double>(), 0.0);
      }
  }
}

TEST(Diff, IterationChangesNothingVisible) {
  auto plan = small_plan(standard_apps(), {Stage::jit_accel_custom}, 60000);
  auto a = run_experiment(plan);
  plan.stages = {Stage::jit_accel_custom_iter};
  auto b = run_experiment(plan);
  auto d = diff_reports(a.doc, b.doc);
  for (const auto& p : d["pairs"])
    for (const auto& m : p["modules"]) {
      EXPECT_EQ(m["miss_rate_delta"].get<double>(), 0.0) << p["app"] << " " << m["category"];
      if (m["category"] == "Perception2D" || m["category"] == "Perception3D") {
        EXPECT_NEAR(m["latency_ratio"].get<double>(), 1.0, 0.06) << p["app"] << " " << m["category"];
      }
    }
}

TEST(Calibration, PerturbedDivisorsReturnToTheirTargets) {
  StageOptions o;
  o.profile_dir = data_path("profiles");
  o.model_dir = data_path("fixtures");
  o.horizon_ms = 20000;
  auto p = load_profile("segment3-ADy416", o.profile_dir);
  for (auto& [k, d] : p.divisors[Category::Perception2D]) d *= 1.6;
  for (auto& [k, d] : p.divisors[Category::Localization]) d *= 0.7;
  CalibrationLog log;
  auto fitted = calibrate_profile(p, o, 16, 0.02, &log);
  EXPECT_TRUE(log.converged);
  auto run = run_stage("ADy416", Stage::jit, o, &fitted);
  for (auto c : calibrated_modules(fitted)) {
    const double target = *fitted.table_ms.at(c);
    EXPECT_NEAR(run.result.misses.module(c)->mean_ms, target, 0.02 * target) << to_string(c);
  }
}

TEST(Calibration, QueueBoundModulesAreLeftOut) {
  auto seg3 = load_profile("segment3-ADy288", data_path("profiles"));
  auto seg5 = load_profile("segment5-ADy288", data_path("profiles"));
  auto seg2 = load_profile("segment2-ADy288", data_path("profiles"));
  auto has = [](const std::vector<Category>& v, Category c) { return std::find(v.begin(), v.end(), c) != v.end(); };
  EXPECT_FALSE(has(calibrated_modules(seg3), Category::Perception3D));
  EXPECT_TRUE(has(calibrated_modules(seg5), Category::Perception3D));
  EXPECT_EQ(calibrated_modules(seg2), std::vector<Category>{Category::Sensing});
}
