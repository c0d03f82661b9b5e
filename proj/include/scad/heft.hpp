#pragma once

// HEFT list scheduling: upward ranks, insertion-based earliest-finish-time
// placement and per-processor priority assignment.

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scad/dag.hpp"

namespace scad {

/// Upward rank per node index (ms).
using RankTable = std::vector<double>;

/// Pluggable ranking strategy; `compute_ranks` is the HEFT upward rank.
using RankFunction = std::function<RankTable(const Dag&)>;

/// rank(i) = mean cost(i) + max over successors j of (mean comm(i,j) + rank(j));
/// exit nodes get their mean cost.
inline RankTable compute_ranks(const Dag& dag) {
  Topology topo(dag);
  auto order = topological_order(dag, topo);
  if (!order) throw StructuralError("cycle detected");
  RankTable rank(dag.nodes.size(), 0.0);
  for (auto it = order->rbegin(); it != order->rend(); ++it) {
    const auto v = *it;
    double tail = 0.0;
    for (auto e : topo.succ_edges[v]) tail = std::max(tail, dag.edges[e].mean_comm() + rank[topo.dst[e]]);
    rank[v] = dag.nodes[v].mean_cost() + tail;
  }
  return rank;
}

struct Slot {
  double start = 0.0;
  double finish = 0.0;
  bool operator==(const Slot&) const = default;
};

/// Static plan: where each task runs, when, and at which priority.
/// Indices refer to Dag::nodes and Platform::processors.
struct Schedule {
  std::vector<std::size_t> assignment;
  /// CPU core hosting the launching thread of an accelerator task; for
  /// CPU tasks it equals the assignment.
  std::vector<std::size_t> host;
  std::vector<Slot> slots;
  std::vector<int> priorities;  // higher = more urgent
  double makespan = 0.0;
  bool operator==(const Schedule&) const = default;
};

/// Optional per-task processor pin (used when an accelerator assignment
/// is fixed by the caller).
using Pins = std::vector<std::optional<std::size_t>>;

namespace detail {

inline double comm_between(const Edge& e, const Platform& pl, std::size_t a, std::size_t b) {
  if (a == b) return 0.0;
  return e.comm(pl.processors[a].kind, pl.processors[b].kind);
}

/// Earliest start >= ready on a timeline of slots sorted by start.
inline double earliest_gap(const std::vector<Slot>& timeline, double ready, double duration) {
  double t = ready;
  for (const auto& s : timeline) {
    if (t + duration <= s.start) return t;
    t = std::max(t, s.finish);
  }
  return t;
}

inline bool may_place(const TaskNode& n, const Platform& pl, std::size_t p, const Pins& pins, std::size_t task) {
  if (!n.eligibility.contains(pl.processors[p].kind)) return false;
  if (!pl.admits(p, n.category)) return false;
  if (task < pins.size() && pins[task] && *pins[task] != p) return false;
  return true;
}

}  // namespace detail

/// Task indices in descending rank; ties (within rounding) by ascending task id.
inline std::vector<std::size_t> rank_order(const Dag& dag, const RankTable& ranks) {
  std::vector<std::size_t> order(dag.nodes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Quantize to nanoseconds so ranks equal up to rounding compare equal.
  std::vector<long long> key(ranks.size());
  for (std::size_t i = 0; i < ranks.size(); ++i) key[i] = std::llround(ranks[i] * 1e6);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (key[a] != key[b]) return key[a] > key[b];
    return dag.nodes[a].id < dag.nodes[b].id;
  });
  return order;
}

inline Schedule schedule_heft(const Dag& dag, const Platform& platform, const RankTable& ranks, const Pins& pins = {}) {
  Topology topo(dag);
  if (!topological_order(dag, topo)) throw StructuralError("cycle detected");
  const std::size_t n = dag.nodes.size();
  const auto order = rank_order(dag, ranks);

  Schedule s;
  s.assignment.assign(n, 0);
  s.host.assign(n, 0);
  s.slots.assign(n, {});
  s.priorities.assign(n, 0);
  std::vector<bool> placed(n, false);
  std::vector<std::vector<Slot>> timeline(platform.processors.size());

  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto t = order[pos];
    const auto& node = dag.nodes[t];
    for (auto e : topo.pred_edges[t])
      if (!placed[topo.src[e]])
        throw SchedulingError("task " + node.id + " ranked above its predecessor " + dag.nodes[topo.src[e]].id);

    double best_eft = std::numeric_limits<double>::infinity();
    double best_est = 0.0;
    std::optional<std::size_t> best;
    for (std::size_t p = 0; p < platform.processors.size(); ++p) {
      if (!detail::may_place(node, platform, p, pins, t)) continue;
      const double exec = node.cost(platform.processors[p].kind) * platform.processors[p].speed_factor;
      double ready = 0.0;
      for (auto e : topo.pred_edges[t]) {
        const auto u = topo.src[e];
        ready = std::max(ready, s.slots[u].finish + detail::comm_between(dag.edges[e], platform, s.assignment[u], p));
      }
      const double est = detail::earliest_gap(timeline[p], ready, exec);
      if (est + exec < best_eft) {
        best_eft = est + exec;
        best_est = est;
        best = p;
      }
    }
    if (!best) throw SchedulingError("no eligible processor for task " + node.id);

    s.assignment[t] = *best;
    s.slots[t] = {best_est, best_eft};
    auto& tl = timeline[*best];
    tl.insert(std::upper_bound(tl.begin(), tl.end(), s.slots[t],
                               [](const Slot& a, const Slot& b) { return a.start < b.start; }),
              s.slots[t]);
    placed[t] = true;
    s.priorities[t] = static_cast<int>(n - pos);
    s.makespan = std::max(s.makespan, best_eft);
  }

  // Host cores: an accelerator task launches from the core of its first
  // CPU-resident predecessor, else from the least-loaded admissible core.
  std::vector<double> load(platform.processors.size(), 0.0);
  for (std::size_t t = 0; t < n; ++t)
    if (platform.processors[s.assignment[t]].kind == ProcKind::CPU) {
      s.host[t] = s.assignment[t];
      load[s.assignment[t]] += s.slots[t].finish - s.slots[t].start;
    }
  for (auto t : order) {
    if (platform.processors[s.assignment[t]].kind == ProcKind::CPU) continue;
    std::optional<std::size_t> host;
    for (auto e : topo.pred_edges[t]) {
      auto p = s.host[topo.src[e]];
      auto pp = s.assignment[topo.src[e]];
      if (platform.processors[pp].kind == ProcKind::CPU && platform.admits(p, dag.nodes[t].category)) {
        host = p;
        break;
      }
    }
    if (!host) {
      for (std::size_t p = 0; p < platform.processors.size(); ++p) {
        if (platform.processors[p].kind != ProcKind::CPU || !platform.admits(p, dag.nodes[t].category)) continue;
        if (!host || load[p] < load[*host]) host = p;
      }
    }
    if (!host) throw SchedulingError("no CPU core can host task " + dag.nodes[t].id);
    s.host[t] = *host;
  }
  return s;
}

inline Schedule schedule_heft(const Dag& dag, const Platform& platform) {
  return schedule_heft(dag, platform, compute_ranks(dag));
}

/// Violations of the Schedule invariants; `check_timing` also verifies
/// slot overlap and precedence + communication constraints.
inline std::vector<std::string> check_schedule(const Dag& dag, const Platform& platform, const Schedule& s,
                                               bool check_timing = true) {
  std::vector<std::string> out;
  const std::size_t n = dag.nodes.size();
  if (s.assignment.size() != n || s.host.size() != n || s.priorities.size() != n ||
      (check_timing && s.slots.size() != n)) {
    out.emplace_back("schedule does not cover every task");
    return out;
  }
  for (std::size_t t = 0; t < n; ++t) {
    const auto& node = dag.nodes[t];
    if (s.assignment[t] >= platform.processors.size()) {
      out.push_back("task " + node.id + ": unknown processor");
      continue;
    }
    const auto& proc = platform.processors[s.assignment[t]];
    if (!node.eligibility.contains(proc.kind)) out.push_back("task " + node.id + ": not eligible on " + proc.id);
    if (!platform.admits(s.assignment[t], node.category))
      out.push_back("task " + node.id + ": category not admitted on " + proc.id);
    if (s.host[t] >= platform.processors.size() || platform.processors[s.host[t]].kind != ProcKind::CPU)
      out.push_back("task " + node.id + ": host is not a CPU core");
  }
  if (!out.empty() || !check_timing) return out;

  const double eps = 1e-9;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b)
      if (s.assignment[a] == s.assignment[b] && s.slots[a].start < s.slots[b].finish - eps &&
          s.slots[b].start < s.slots[a].finish - eps)
        out.push_back("overlap on " + platform.processors[s.assignment[a]].id + ": " + dag.nodes[a].id + ", " +
                      dag.nodes[b].id);
  Topology topo(dag);
  for (std::size_t e = 0; e < dag.edges.size(); ++e) {
    auto u = topo.src[e], v = topo.dst[e];
    double need = s.slots[u].finish + detail::comm_between(dag.edges[e], platform, s.assignment[u], s.assignment[v]);
    if (s.slots[v].start + eps < need)
      out.push_back("precedence violated: " + dag.nodes[u].id + " -> " + dag.nodes[v].id);
  }
  for (std::size_t t = 0; t < n; ++t) {
    double exec = dag.nodes[t].cost(platform.processors[s.assignment[t]].kind) *
                  platform.processors[s.assignment[t]].speed_factor;
    if (std::abs((s.slots[t].finish - s.slots[t].start) - exec) > 1e-6)
      out.push_back("task " + dag.nodes[t].id + ": slot length differs from cost");
  }
  return out;
}

// ---------------------------------------------------------------------------
// `.sched` document and Gantt rendering
// ---------------------------------------------------------------------------

inline json schedule_to_json(const Dag& dag, const Platform& pl, const Schedule& s) {
  json assignment = json::object(), host = json::object(), slots = json::object(), prio = json::object();
  for (std::size_t t = 0; t < dag.nodes.size(); ++t) {
    const auto& id = dag.nodes[t].id;
    assignment[id] = pl.processors[s.assignment[t]].id;
    host[id] = pl.processors[s.host[t]].id;
    slots[id] = {{"start", s.slots[t].start}, {"finish", s.slots[t].finish}};
    prio[id] = s.priorities[t];
  }
  return {{"version", 1},      {"assignment", assignment}, {"host", host},
          {"slots", slots},    {"priorities", prio},       {"makespan", s.makespan}};
}

inline Schedule schedule_from_json(const Dag& dag, const Platform& pl, const json& j) {
  detail::only_keys(j, "", {"version", "assignment", "host", "slots", "priorities", "makespan"});
  if (detail::need(j, "", "version") != 1) throw ParseError("version", "schema version mismatch");
  Schedule s;
  const std::size_t n = dag.nodes.size();
  s.assignment.assign(n, 0);
  s.host.assign(n, 0);
  s.slots.assign(n, {});
  s.priorities.assign(n, 0);
  auto proc = [&](const json& obj, const std::string& field, const std::string& id) {
    auto it = obj.find(id);
    if (it == obj.end()) throw ParseError(field + "." + id, "missing task");
    auto p = pl.index_of(detail::get_string(*it, field + "." + id));
    if (!p) throw ParseError(field + "." + id, "unknown processor");
    return *p;
  };
  const auto& a = detail::need(j, "", "assignment");
  const auto& h = detail::need(j, "", "host");
  const auto& sl = detail::need(j, "", "slots");
  const auto& pr = detail::need(j, "", "priorities");
  for (std::size_t t = 0; t < n; ++t) {
    const auto& id = dag.nodes[t].id;
    s.assignment[t] = proc(a, "assignment", id);
    s.host[t] = proc(h, "host", id);
    if (!sl.contains(id)) throw ParseError("slots." + id, "missing task");
    s.slots[t].start = detail::get_number(detail::need(sl[id], "slots." + id, "start"), "slots." + id + ".start");
    s.slots[t].finish = detail::get_number(detail::need(sl[id], "slots." + id, "finish"), "slots." + id + ".finish");
    if (!pr.contains(id) || !pr[id].is_number_integer()) throw ParseError("priorities." + id, "expected an integer");
    s.priorities[t] = pr[id].get<int>();
  }
  s.makespan = detail::get_number(detail::need(j, "", "makespan"), "makespan");
  return s;
}

/// One line per processor listing its slots in time order.
inline std::string render_gantt(const Dag& dag, const Platform& pl, const Schedule& s) {
  std::ostringstream os;
  std::size_t width = 0;
  for (const auto& p : pl.processors) width = std::max(width, p.id.size());
  os << std::fixed << std::setprecision(2);
  for (std::size_t p = 0; p < pl.processors.size(); ++p) {
    std::vector<std::size_t> on;
    for (std::size_t t = 0; t < dag.nodes.size(); ++t)
      if (s.assignment[t] == p) on.push_back(t);
    std::sort(on.begin(), on.end(), [&](auto a, auto b) { return s.slots[a].start < s.slots[b].start; });
    os << std::left << std::setw(static_cast<int>(width)) << pl.processors[p].id << " |";
    for (auto t : on)
      os << " [" << s.slots[t].start << "," << s.slots[t].finish << ") " << dag.nodes[t].id << "(p" << s.priorities[t]
         << ")";
    os << "\n";
  }
  os << "makespan " << s.makespan << " ms\n";
  return os.str();
}

}  // namespace scad
