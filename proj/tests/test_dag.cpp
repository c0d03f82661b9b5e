#include <gtest/gtest.h>

#include "scad/dag.hpp"
#include "support.hpp"

using namespace scad;
using namespace scad::testing;

namespace {

Dag chain2() {
  Dag d;
  d.nodes = {source_node("a", 2.0, 100.0), cpu_node("b", 3.0)};
  d.edges = {edge("a", "b", 1.0)};
  return d;
}

}  // namespace

TEST(Validate, WellFormedChainHasNoViolations) { EXPECT_TRUE(validate(chain2(), cpus(1)).empty()); }

TEST(Validate, TwoCycleIsReportedByName) {
  Dag d = chain2();
  d.edges.push_back(edge("b", "a"));
  auto v = validate(d, cpus(1));
  ASSERT_FALSE(v.empty());
  EXPECT_NE(std::find(v.begin(), v.end(), "cycle detected: a,b"), v.end());
}

TEST(Validate, DlaOnlyNodeOnCpuPlatform) {
  Dag d = chain2();
  d.nodes[1].costs = {{ProcKind::DLA, 3.0}};
  d.nodes[1].eligibility = {ProcKind::DLA};
  auto v = validate(d, cpus(2));
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].rfind("eligibility:", 0), 0u);
}

TEST(Validate, MissingCostAndEmptyGraph) {
  Dag d = chain2();
  d.nodes[1].eligibility.insert(ProcKind::GPU);
  auto v = validate(d, default_platform());
  ASSERT_EQ(v.size(), 1u);
  EXPECT_NE(v[0].find("missing cost"), std::string::npos);
  EXPECT_EQ(validate(Dag{}, cpus(1)), std::vector<std::string>{"no nodes"});
}

TEST(Validate, PureAndDeterministic) {
  Dag d = chain2();
  d.edges.push_back(edge("b", "a"));
  d.nodes[0].deadline_ms = -1;
  const Dag before = d;
  auto v1 = validate(d, cpus(1));
  auto v2 = validate(d, cpus(1));
  EXPECT_EQ(v1, v2);
  EXPECT_EQ(d, before);
}

TEST(Validate, ReservedOnlyPlatformIsRejected) {
  Platform p = cpus(1);
  p.reserved = {"cpu0"};
  auto v = validate(chain2(), p);
  EXPECT_EQ(v.back(), "platform: no CPU left after removing reserved processors");
}

TEST(Document, RoundTripIsIdentity) {
  Dag d = chain2();
  d.nodes[1].costs[ProcKind::GPU] = 0.5;
  d.nodes[1].eligibility.insert(ProcKind::GPU);
  d.edges[0].trigger = false;
  d.edges[0].assumed = true;
  const auto text = dump_dag(d, default_platform());
  const auto doc = load_document(text);
  EXPECT_EQ(doc.dag, d);
  ASSERT_TRUE(doc.platform.has_value());
  EXPECT_EQ(*doc.platform, default_platform());
  EXPECT_EQ(dump_dag(doc.dag, doc.platform), text);
}

TEST(Document, EmptyNodesIsAnError) {
  try {
    load_dag(R"({"version":1,"nodes":[],"edges":[]})");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("no nodes"), std::string::npos);
  }
}

TEST(Document, VersionMismatchAndUnknownField) {
  EXPECT_THROW(load_dag(R"({"version":2,"nodes":[]})"), ParseError);
  const std::string bad = R"({"version":1,"nodes":[{"id":"a","category":"Sensing","costs":{"CPU":1},
    "eligibility":["CPU"],"deadline_ms":10,"colour":"red"}]})";
  try {
    load_dag(bad);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_NE(std::string(e.what()).find("nodes[0].colour"), std::string::npos);
  }
}

TEST(Document, SyntaxErrorCarriesLineAndColumn) {
  try {
    load_dag("{\n  \"version\": 1,\n  \"nodes\": [ oops ]\n}");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("3:", 0), 0u) << e.what();
  }
}

TEST(Topology, OrderRespectsEdges) {
  Dag d;
  d.nodes = {cpu_node("c", 1), cpu_node("a", 1), cpu_node("b", 1)};
  d.nodes[1].period_ms = 10;
  d.edges = {edge("a", "b"), edge("b", "c")};
  auto order = topological_order(d);
  ASSERT_EQ(order.size(), 3u);
  EXPECT_EQ(d.nodes[order[0]].id, "a");
  EXPECT_EQ(d.nodes[order[2]].id, "c");
}

TEST(Platform, DefaultProfile) {
  auto p = default_platform();
  int cpu = 0, gpu = 0, dla = 0;
  for (const auto& q : p.processors) {
    cpu += q.kind == ProcKind::CPU;
    gpu += q.kind == ProcKind::GPU;
    dla += q.kind == ProcKind::DLA;
  }
  EXPECT_EQ(cpu, 8);
  EXPECT_EQ(gpu, 1);
  EXPECT_EQ(dla, 2);
  EXPECT_DOUBLE_EQ(p.processors[*p.index_of("gpu0")].power_watts, 30.0);
  auto noacc = without_kind(p, ProcKind::DLA);
  EXPECT_EQ(noacc.processors.size(), 9u);
  EXPECT_TRUE(noacc.admits(*noacc.index_of("cpu6"), Category::Planning));
  EXPECT_FALSE(noacc.admits(*noacc.index_of("cpu6"), Category::Sensing));
  EXPECT_FALSE(noacc.admits(*noacc.index_of("cpu0"), Category::Control));
}
