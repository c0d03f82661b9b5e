#include <gtest/gtest.h>

#include "scad/heft.hpp"
#include "scad/workload.hpp"
#include "support.hpp"

using namespace scad;
using namespace scad::testing;

namespace {

int count_prefix(const Dag& d, const std::string& prefix) {
  int n = 0;
  for (const auto& t : d.nodes) n += t.id.rfind(prefix, 0) == 0;
  return n;
}

}  // namespace

TEST(Workload, StandardAppsFollowTheirStreamTable) {
  const std::map<std::string, std::tuple<ModelFamily, int, int>> expected{
      {"ADy288", {ModelFamily::Yolo, 288, 10}}, {"ADy416", {ModelFamily::Yolo, 416, 5}},
      {"ADy608", {ModelFamily::Yolo, 608, 3}},  {"ADs288", {ModelFamily::SPP, 288, 10}},
      {"ADs416", {ModelFamily::SPP, 416, 5}},   {"ADs608", {ModelFamily::SPP, 608, 3}}};
  for (const auto& app : standard_apps()) {
    auto s = standard_app(app);
    auto [fam, res, streams] = expected.at(app);
    EXPECT_EQ(s.family, fam);
    EXPECT_EQ(s.resolution, res);
    EXPECT_EQ(s.num_2d_streams, streams);
    auto d = generate(s);
    EXPECT_EQ(count_prefix(d, s.detector_prefix()), streams);
    EXPECT_EQ(count_prefix(d, "camera_driver_"), streams);
  }
  EXPECT_THROW(standard_app("ADx288"), Error);
}

TEST(Workload, Ady288HasTheNamedBackbone) {
  auto d = generate(standard_app("ADy288"));
  EXPECT_EQ(d.nodes.size(), 38u);
  for (const char* id : {"velodyne_driver", "voxel_grid_filter", "lidar_point_pillars", "range_vision_fusion",
                         "imm_ukf_tracker", "native_motion_predictor", "costmap_generator", "nmea2tfpose",
                         "ndt_matching", "pose_relay", "vel_relay", "waypoint_replanner", "lane_rule", "lane_stop",
                         "lane_select", "astar_avoid", "velocity_set", "pure_pursuit"})
    EXPECT_TRUE(d.index_of(id).has_value()) << id;
  for (const auto& n : d.nodes)
    if (n.category == Category::Perception2D) EXPECT_EQ(n.eligibility, KindSet{ProcKind::GPU});
  EXPECT_TRUE(validate(d, default_platform()).empty());
  EXPECT_DOUBLE_EQ(d.node("astar_avoid").deadline_ms, 10.0);
  EXPECT_DOUBLE_EQ(d.node("ndt_matching").deadline_ms, 100.0);
}

TEST(Workload, PaddedBackboneReachesTwentyEightTasks) {
  auto s = standard_app("ADy288");
  s.pad_backbone = true;
  auto d = generate(s);
  EXPECT_EQ(d.nodes.size(), 28u + 20u);
  EXPECT_DOUBLE_EQ(d.node("points_map_loader").cost(ProcKind::CPU), kPassThroughMs);
}

TEST(Workload, DetectorFanInMatchesStreamCount) {
  for (int streams : {1, 2, 7}) {
    WorkloadSpec s;
    s.num_2d_streams = streams;
    auto d = generate(s);
    int fan_in = 0;
    for (const auto& e : d.edges)
      if (e.dst == "range_vision_fusion" && e.src.rfind("yolo_", 0) == 0) ++fan_in;
    EXPECT_EQ(fan_in, streams);
  }
}

TEST(Workload, DlaEligibilityFollowsSubstitutionMode) {
  auto s = standard_app("ADs608");
  s.dla = DlaMode::native;
  auto d = generate(s);
  EXPECT_EQ(d.node("spp_0").eligibility, (KindSet{ProcKind::GPU, ProcKind::DLA}));
  EXPECT_EQ(d.node("lidar_point_pillars").eligibility, KindSet{ProcKind::GPU});
}

TEST(Workload, ZeroStreamsWithFusionIsStructuralError) {
  WorkloadSpec s;
  s.num_2d_streams = 0;
  EXPECT_THROW(generate(s), StructuralError);
  s.fusion_2d = false;
  EXPECT_NO_THROW(generate(s));
}

TEST(Workload, GenerationIsReproducible) {
  auto s = standard_app("ADy416");
  EXPECT_EQ(dump_dag(generate(s)), dump_dag(generate(s)));
}

TEST(Workload, UnitProfileSingleStreamMeetsEveryDeadline) {
  WorkloadSpec s;
  auto d = generate(s);
  for (const auto& n : d.nodes)
    for (const auto& [k, c] : n.costs) EXPECT_DOUBLE_EQ(c, 1.0) << n.id;
  SimConfig c;
  c.horizon_ms = 5000;
  c.policy.policy = Policy::JIT_RT;

  Platform shared;
  shared.processors = {{"cpu0", ProcKind::CPU, 1.0, 1.0}, {"gpu0", ProcKind::GPU, 1.0, 30.0}};
  auto r = simulate(d, shared, schedule_heft(d, shared), c);
  EXPECT_TRUE(r.misses.starved.empty());
  for (const auto& m : r.misses.modules)
    if (!runs_on_reserved(m.category)) EXPECT_DOUBLE_EQ(m.miss_rate, 0.0) << to_string(m.category);

  // the six-task planning chain has a 10 ms budget; it needs its own core
  // to stay clear of the aligned 100 ms source burst
  Platform isolated = shared;
  isolated.processors.insert(isolated.processors.begin() + 1, {"cpu1", ProcKind::CPU, 1.0, 1.0});
  isolated.reserved = {"cpu1"};
  r = simulate(d, isolated, schedule_heft(d, isolated), c);
  EXPECT_DOUBLE_EQ(r.misses.overall_miss_rate(), 0.0);
  EXPECT_TRUE(r.misses.starved.empty());
}

TEST(Profiles, UnknownProfileListsAvailableOnes) {
  try {
    load_profile("segment9-ADy999", data_path("profiles"));
    FAIL();
  } catch (const Error& e) {
    std::string msg = e.what();
    EXPECT_NE(msg.find("unit"), std::string::npos);
    EXPECT_NE(msg.find("segment1-ADy288"), std::string::npos);
  }
}

TEST(Profiles, ShippedProfilesCoverTheGrid) {
  for (int seg = 1; seg <= 6; ++seg)
    for (const auto& app : standard_apps()) {
      auto p = load_profile("segment" + std::to_string(seg) + "-" + app, data_path("profiles"));
      EXPECT_EQ(p.segment, seg);
      EXPECT_EQ(p.app, app);
      EXPECT_EQ(profile_from_json(to_json(p)).module_ms, p.module_ms);
      auto spec = standard_app(app);
      spec.dla = DlaMode::native;
      for (const auto& [id, row] : calibrate(p, spec))
        for (const auto& [k, v] : row) EXPECT_GT(v, 0.0) << p.name << " " << id;
    }
}

TEST(Profiles, DetectorCostFollowsModuleTimeOverDivisor) {
  auto p = load_profile("segment1-ADy288", data_path("profiles"));
  auto costs = calibrate(p, standard_app("ADy288"));
  EXPECT_DOUBLE_EQ(costs.at("yolo_3").at(ProcKind::GPU),
                   *p.table_ms.at(Category::Perception2D) / p.divisor(Category::Perception2D, ProcKind::GPU));
  EXPECT_DOUBLE_EQ(costs.at("ndt_matching").at(ProcKind::CPU),
                   0.9 * p.module_ms.at(Category::Localization) / p.divisor(Category::Localization, ProcKind::CPU));
}
