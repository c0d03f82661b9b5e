#include <gtest/gtest.h>

#include <random>

#include "scad/partition.hpp"
#include "support.hpp"

using namespace scad;
using namespace scad::testing;

namespace {

SupportProfile dla() { return load_support_profile(data_path("fixtures/dla.prof")); }

LayerGraph from_ops(const std::vector<std::string>& ops) {
  LayerGraph g;
  g.name = "toy";
  g.blocks.push_back({"b0", 0, ops.size()});
  for (const auto& op : ops) g.layers.push_back({op, "b0", ""});
  return g;
}

// Counts maximal unsupported runs by scanning adjacent pairs.
int unsupported_runs_oracle(const std::vector<std::string>& ops, const SupportProfile& p) {
  int runs = 0;
  for (std::size_t i = 0; i < ops.size(); ++i)
    if (!p.supports(ops[i]) && (i == 0 || p.supports(ops[i - 1]))) ++runs;
  return runs;
}

}  // namespace

TEST(Partition, AllSupportedIsOneTargetSegment) {
  auto plan = partition(from_ops({"conv", "batchnorm", "relu"}), dla());
  ASSERT_EQ(plan.segments.size(), 1u);
  EXPECT_EQ(plan.segments[0].device, SegmentDevice::Target);
  EXPECT_EQ(plan.fallback_count, 0);
  EXPECT_TRUE(plan.feasible);
}

TEST(Partition, EmptyGraphIsStructuralError) { EXPECT_THROW(partition(LayerGraph{}, dla()), StructuralError); }

TEST(Partition, YoloFixtureIsInfeasibleWithTailFallback) {
  for (const char* f : {"fixtures/yolov3-288.lg", "fixtures/yolov3-608.lg", "fixtures/yolov3-spp-416.lg"}) {
    auto g = load_layer_graph(data_path(f));
    int conv_blocks = 0;
    for (const auto& b : g.blocks) conv_blocks += b.name.rfind("conv_", 0) == 0;
    EXPECT_EQ(conv_blocks, 57);
    auto plan = partition(g, dla());
    EXPECT_EQ(plan.unsupported_runs, 57) << f;
    EXPECT_FALSE(plan.feasible);
    EXPECT_EQ(plan.fallback_count, 8);
    EXPECT_EQ(plan.segments.back().device, SegmentDevice::Fallback);
    EXPECT_EQ(plan.segments.back().last, g.layers.size() - 1);
  }
}

TEST(Partition, SubstitutionMakesYoloDlaResident) {
  auto g = load_layer_graph(data_path("fixtures/yolov3-416.lg"));
  auto prof = dla();
  auto r = substitute(g, {leaky_relu_to_relu()}, &prof);
  EXPECT_TRUE(r.warnings.empty());
  EXPECT_EQ(r.replaced, 57);
  auto plan = partition(r.graph, prof);
  ASSERT_EQ(plan.segments.size(), 1u);
  EXPECT_EQ(plan.fallback_count, 0);
  EXPECT_TRUE(plan.feasible);
}

TEST(Partition, ExactlyEightRunsIsFeasible) {
  std::vector<std::string> ops;
  for (int i = 0; i < 8; ++i) {
    ops.push_back("conv");
    ops.push_back("leaky_relu");
  }
  ops.push_back("conv");
  auto plan = partition(from_ops(ops), dla());
  EXPECT_TRUE(plan.feasible);
  EXPECT_EQ(plan.fallback_count, 8);
  EXPECT_EQ(plan.transitions(), 16);
  EXPECT_DOUBLE_EQ(derive_costs(plan, std::vector<double>(plan.segments.size(), 0.0), 1.0), 16.0);
}

TEST(Partition, RandomListsMatchRunLengthOracle) {
  std::mt19937 rng(5);
  const std::vector<std::string> alphabet{"conv", "leaky_relu", "batchnorm", "mish", "add"};
  auto prof = dla();
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> ops(1 + rng() % 60);
    for (auto& op : ops) op = alphabet[rng() % alphabet.size()];
    prof.max_fallback_subgraphs = static_cast<int>(rng() % 10);
    auto plan = partition(from_ops(ops), prof);
    const int runs = unsupported_runs_oracle(ops, prof);
    EXPECT_EQ(plan.unsupported_runs, runs);
    EXPECT_EQ(plan.feasible, runs == 0 || runs <= prof.max_fallback_subgraphs);
    EXPECT_EQ(plan.fallback_count, runs <= prof.max_fallback_subgraphs ? runs : prof.max_fallback_subgraphs);
    EXPECT_LE(plan.fallback_count, std::max(prof.max_fallback_subgraphs, 0));
    // coverage and order
    std::size_t next = 0;
    for (const auto& s : plan.segments) {
      EXPECT_EQ(s.first, next);
      EXPECT_GE(s.last, s.first);
      next = s.last + 1;
    }
    EXPECT_EQ(next, ops.size());
  }
}

TEST(Partition, AddingSupportCanSplitARun) {
  // Maximal-run segmentation: supporting a middle op splits one
  // unsupported run into two, so the run count is not monotone.
  auto prof = dla();
  const std::vector<std::string> ops{"conv", "leaky_relu", "mish", "leaky_relu", "conv"};
  EXPECT_EQ(partition(from_ops(ops), prof).fallback_count, 1);
  prof.supported_ops.insert("mish");
  EXPECT_EQ(partition(from_ops(ops), prof).fallback_count, 2);
}

TEST(Partition, AddingSupportNeverMovesMoreLayersToFallback) {
  std::mt19937 rng(9);
  const std::vector<std::string> alphabet{"conv", "leaky_relu", "mish", "softmax"};
  auto fallback_layers = [](const PartitionPlan& p) {
    std::size_t n = 0;
    for (const auto& s : p.segments)
      if (s.device == SegmentDevice::Fallback) n += s.last - s.first + 1;
    return n;
  };
  int checked = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<std::string> ops(1 + rng() % 40);
    for (auto& op : ops) op = alphabet[rng() % alphabet.size()];
    auto prof = dla();
    auto before = partition(from_ops(ops), prof);
    prof.supported_ops.insert(alphabet[1 + rng() % 3]);
    auto after = partition(from_ops(ops), prof);
    if (!before.feasible || !after.feasible) continue;
    ++checked;
    EXPECT_LE(fallback_layers(after), fallback_layers(before));
  }
  EXPECT_GT(checked, 50);
}

TEST(Partition, TotalSegmentCounting) {
  auto prof = dla();
  prof.count_total_segments = true;
  prof.max_fallback_subgraphs = 3;
  auto plan = partition(from_ops({"conv", "leaky_relu", "conv", "leaky_relu", "conv"}), prof);
  EXPECT_FALSE(plan.feasible);
  EXPECT_EQ(plan.segments.size(), 3u);
  EXPECT_EQ(plan.segments.back().device, SegmentDevice::Fallback);
}

TEST(Substitute, EmptyRulesAndNoMatchesAreIdentity) {
  auto g = load_layer_graph(data_path("fixtures/yolov3-288.lg"));
  EXPECT_EQ(substitute(g, {}).graph, g);
  EXPECT_EQ(substitute(g, {{"gelu", "relu", ""}}).graph, g);
}

TEST(Substitute, PreservesStructureAndIsIdempotent) {
  auto g = load_layer_graph(data_path("fixtures/yolov3-spp-608.lg"));
  auto once = substitute(g, {leaky_relu_to_relu()}).graph;
  EXPECT_EQ(once.layers.size(), g.layers.size());
  EXPECT_EQ(once.blocks, g.blocks);
  EXPECT_EQ(once.skips, g.skips);
  EXPECT_EQ(substitute(once, {leaky_relu_to_relu()}).graph, once);
}

TEST(Substitute, UnsupportedTargetOpWarns) {
  auto prof = dla();
  auto r = substitute(from_ops({"conv", "leaky_relu"}), {{"leaky_relu", "mish", ""}}, &prof);
  ASSERT_EQ(r.warnings.size(), 1u);
  EXPECT_NE(r.warnings[0].find("mish"), std::string::npos);
}

TEST(DeriveCosts, Examples) {
  PartitionPlan one;
  one.segments = {{SegmentDevice::Target, 0, 9}};
  EXPECT_DOUBLE_EQ(derive_costs(one, {90.0}, 1.0), 90.0);
  EXPECT_THROW(derive_costs(one, {}, 1.0), Error);

  auto g = substitute(load_layer_graph(data_path("fixtures/yolov3-288.lg")), {leaky_relu_to_relu()}).graph;
  auto plan = partition(g, dla());
  auto costs = segment_costs(g, plan, 42.0, 20.0);
  EXPECT_DOUBLE_EQ(derive_costs(plan, costs, 1.0), 42.0);
}

TEST(DeriveCosts, PhasePlanSumsToDerivedCost) {
  auto g = load_layer_graph(data_path("fixtures/yolov3-288.lg"));
  auto prof = dla();
  auto plan = partition(g, prof, 1.0);
  auto phases = phase_plan(g, plan, prof, 60.0, 30.0, 1.0);
  double total = 0.0;
  for (const auto& p : phases) total += p.ms + p.switch_ms;
  EXPECT_NEAR(total, derive_costs(plan, segment_costs(g, plan, 60.0, 30.0), 1.0), 1e-9);
  EXPECT_EQ(phases.front().device, ProcKind::DLA);
  EXPECT_EQ(phases.back().device, ProcKind::GPU);
}

TEST(LayerGraphFormat, RoundTripAndErrors) {
  auto g = load_layer_graph(data_path("fixtures/yolov3-288.lg"));
  EXPECT_EQ(parse_layer_graph(dump_layer_graph(g)), g);
  EXPECT_FALSE(g.skips.empty());
  EXPECT_THROW(parse_layer_graph("layer conv\n"), ParseError);
  EXPECT_THROW(parse_layer_graph("block a\nlayer add from=7\n"), ParseError);
  EXPECT_THROW(parse_layer_graph("blok a\n"), ParseError);
}
