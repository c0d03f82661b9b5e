#pragma once

#include <string>
#include <vector>

#include "scad/dag.hpp"

namespace scad::testing {

inline TaskNode cpu_node(std::string id, double cost, Category cat = Category::Sensing) {
  TaskNode n;
  n.id = id;
  n.name = id;
  n.category = cat;
  n.costs[ProcKind::CPU] = cost;
  n.eligibility = {ProcKind::CPU};
  n.threads = 1;
  return n;
}

inline TaskNode source_node(std::string id, double cost, double period_ms, Category cat = Category::Sensing) {
  auto n = cpu_node(std::move(id), cost, cat);
  n.period_ms = period_ms;
  return n;
}

inline Edge edge(std::string a, std::string b, double comm = 0.0) {
  Edge e;
  e.src = std::move(a);
  e.dst = std::move(b);
  if (comm > 0.0)
    for (auto x : kAllKinds)
      for (auto y : kAllKinds) e.comm_cost[make_pair_key(x, y)] = comm;
  return e;
}

inline Platform cpus(int n) {
  Platform p;
  for (int i = 0; i < n; ++i) p.processors.push_back({"cpu" + std::to_string(i), ProcKind::CPU, 1.0, 1.0});
  return p;
}

inline std::string data_path(const std::string& rel) { return std::string(SCAD_DATA_DIR) + "/" + rel; }

}  // namespace scad::testing
