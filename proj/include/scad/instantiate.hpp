#pragma once

// Accelerator-assignment search: enumerate every valid placement of the
// accelerator-eligible tasks, measure each under the default schedule,
// specialise the DAG to the measurements, reschedule and keep the best.

#include <algorithm>
#include <atomic>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "scad/dag.hpp"
#include "scad/heft.hpp"
#include "scad/sim.hpp"

namespace scad {

/// Option value meaning "any CPU core, chosen by the list scheduler".
inline constexpr std::size_t kAnyCpu = std::numeric_limits<std::size_t>::max();

struct AssignmentSpace {
  std::vector<std::size_t> tasks;                     // dag indices with an accelerator option
  std::vector<std::vector<std::size_t>> options;      // per entry of `tasks`
  std::vector<std::vector<std::size_t>> assignments;  // chosen option per entry of `tasks`
  std::size_t full_size = 1;                          // product of option counts, saturating
  bool reduced = false;                               // symmetry reduction applied
};

struct SearchOptions {
  std::size_t bound = 10000;
  bool symmetry = true;
  double candidate_horizon_ms = 0.0;  // 0: use the simulation horizon
  int jobs = 1;
  bool reenumerate = false;  // iterative loop re-evaluates every candidate each round
};

namespace detail {

inline std::size_t saturating_mul(std::size_t a, std::size_t b) {
  if (a != 0 && b > std::numeric_limits<std::size_t>::max() / a) return std::numeric_limits<std::size_t>::max();
  return a * b;
}

inline std::string node_signature(const TaskNode& n) {
  json j = {{"c", to_string(n.category)},
            {"e", n.eligibility.kinds().size()},
            {"d", n.deadline_ms},
            {"t", n.threads},
            {"p", n.period_ms ? *n.period_ms : -1.0}};
  for (const auto& [k, v] : n.costs) j["k"][std::string(to_string(k))] = v;
  for (auto k : n.eligibility.kinds()) j["el"].push_back(to_string(k));
  return j.dump();
}

inline std::string edge_signature(const Edge& e) {
  json j = {{"t", e.trigger}};
  for (const auto& [k, v] : e.comm_cost) j["c"].push_back({to_string(k.first), to_string(k.second), v});
  return j.dump();
}

/// Tasks with equal signatures can trade places without changing the
/// workload: same attributes, private producers with equal attributes,
/// and the same consumers.
inline std::string task_signature(const Dag& dag, const Topology& topo, std::size_t t) {
  std::vector<std::string> preds, succs;
  for (auto e : topo.pred_edges[t]) {
    const auto u = topo.src[e];
    if (topo.succ_edges[u].size() == 1)
      preds.push_back(node_signature(dag.nodes[u]) + "|" + std::to_string(topo.pred_edges[u].size()) + "|" +
                      edge_signature(dag.edges[e]));
    else
      preds.push_back(dag.nodes[u].id + "|" + edge_signature(dag.edges[e]));
  }
  for (auto e : topo.succ_edges[t]) succs.push_back(dag.nodes[topo.dst[e]].id + "|" + edge_signature(dag.edges[e]));
  std::sort(preds.begin(), preds.end());
  std::sort(succs.begin(), succs.end());
  std::string s = node_signature(dag.nodes[t]);
  for (const auto& p : preds) s += "<" + p;
  for (const auto& p : succs) s += ">" + p;
  return s;
}

inline bool same_processor_class(const Processor& a, const Processor& b, bool ra, bool rb) {
  return a.kind == b.kind && a.speed_factor == b.speed_factor && a.power_watts == b.power_watts && ra == rb;
}

/// All ways to place `n` identical items into `k` ordered bins, in
/// lexicographic order of the count vector (largest first bin first).
inline void compositions(int n, int k, std::vector<int>& cur, std::vector<std::vector<int>>& out) {
  if (k == 1) {
    cur.push_back(n);
    out.push_back(cur);
    cur.pop_back();
    return;
  }
  for (int i = n; i >= 0; --i) {
    cur.push_back(i);
    compositions(n - i, k - 1, cur, out);
    cur.pop_back();
  }
}

}  // namespace detail

inline AssignmentSpace enumerate_assignments(const Dag& dag, const Platform& pl, const SearchOptions& opt = {}) {
  Topology topo(dag);
  if (!topological_order(dag, topo)) throw StructuralError("cycle detected");
  AssignmentSpace sp;
  for (std::size_t t = 0; t < dag.nodes.size(); ++t) {
    const auto& n = dag.nodes[t];
    std::vector<std::size_t> opts;
    for (std::size_t p = 0; p < pl.processors.size(); ++p)
      if (is_accelerator(pl.processors[p].kind) && n.eligibility.contains(pl.processors[p].kind)) opts.push_back(p);
    if (opts.empty()) continue;
    if (n.eligibility.contains(ProcKind::CPU) && pl.kinds().contains(ProcKind::CPU)) opts.push_back(kAnyCpu);
    sp.tasks.push_back(t);
    sp.options.push_back(std::move(opts));
    sp.full_size = detail::saturating_mul(sp.full_size, sp.options.back().size());
  }
  const auto too_many = [&](std::size_t count) {
    return Error("assignment space has " + std::to_string(count) + " candidates, more than the bound of " +
                 std::to_string(opt.bound));
  };

  if (!opt.symmetry) {
    if (sp.full_size > opt.bound) throw too_many(sp.full_size);
    std::vector<std::size_t> idx(sp.tasks.size(), 0);
    while (true) {
      std::vector<std::size_t> a(sp.tasks.size());
      for (std::size_t i = 0; i < a.size(); ++i) a[i] = sp.options[i][idx[i]];
      sp.assignments.push_back(std::move(a));
      std::size_t i = idx.size();
      while (i > 0 && ++idx[i - 1] == sp.options[i - 1].size()) idx[--i] = 0;
      if (i == 0) break;
    }
    return sp;
  }

  sp.reduced = true;
  // task classes, in order of first member
  std::vector<std::vector<std::size_t>> classes;  // entries of sp.tasks
  {
    std::map<std::string, std::size_t> by_sig;
    for (std::size_t i = 0; i < sp.tasks.size(); ++i) {
      auto sig = detail::task_signature(dag, topo, sp.tasks[i]);
      for (auto o : sp.options[i]) sig += "#" + std::to_string(o);
      auto [it, fresh] = by_sig.emplace(sig, classes.size());
      if (fresh) classes.emplace_back();
      classes[it->second].push_back(i);
    }
  }
  // groups of interchangeable accelerators
  std::vector<std::vector<std::size_t>> groups;
  for (std::size_t p = 0; p < pl.processors.size(); ++p) {
    if (!is_accelerator(pl.processors[p].kind)) continue;
    bool placed = false;
    for (auto& g : groups)
      if (detail::same_processor_class(pl.processors[g[0]], pl.processors[p], pl.is_reserved(g[0]), pl.is_reserved(p))) {
        g.push_back(p);
        placed = true;
        break;
      }
    if (!placed) groups.push_back({p});
  }

  std::vector<std::vector<std::vector<int>>> per_class(classes.size());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    std::vector<int> cur;
    detail::compositions(static_cast<int>(classes[c].size()),
                         static_cast<int>(sp.options[classes[c][0]].size()), cur, per_class[c]);
  }

  std::vector<std::size_t> pick(classes.size(), 0);
  auto canonical = [&]() {
    for (const auto& g : groups) {
      if (g.size() < 2) continue;
      std::vector<std::vector<int>> usage;
      for (auto p : g) {
        std::vector<int> u;
        for (std::size_t c = 0; c < classes.size(); ++c) {
          const auto& opts = sp.options[classes[c][0]];
          auto it = std::find(opts.begin(), opts.end(), p);
          u.push_back(it == opts.end() ? 0 : per_class[c][pick[c]][it - opts.begin()]);
        }
        usage.push_back(std::move(u));
      }
      for (std::size_t i = 1; i < usage.size(); ++i)
        if (usage[i - 1] < usage[i]) return false;
    }
    return true;
  };
  while (true) {
    if (canonical()) {
      if (sp.assignments.size() == opt.bound) throw too_many(opt.bound + 1);
      std::vector<std::size_t> a(sp.tasks.size());
      for (std::size_t c = 0; c < classes.size(); ++c) {
        const auto& counts = per_class[c][pick[c]];
        const auto& opts = sp.options[classes[c][0]];
        std::size_t m = 0;
        for (std::size_t o = 0; o < counts.size(); ++o)
          for (int k = 0; k < counts[o]; ++k) a[classes[c][m++]] = opts[o];
      }
      sp.assignments.push_back(std::move(a));
    }
    std::size_t c = pick.size();
    while (c > 0 && ++pick[c - 1] == per_class[c - 1].size()) pick[--c] = 0;
    if (c == 0) break;
  }
  return sp;
}

// ---------------------------------------------------------------------------
// instantiation
// ---------------------------------------------------------------------------

/// Per-task measured execution time, keyed by task id.
using TaskPerf = std::map<std::string, double>;

/// Kind each task runs on under assignment `a` (CPU for tasks outside the space).
inline std::vector<ProcKind> kinds_under(const Dag& dag, const Platform& pl, const AssignmentSpace& sp,
                                         const std::vector<std::size_t>& a) {
  std::vector<ProcKind> k(dag.nodes.size(), ProcKind::CPU);
  for (std::size_t i = 0; i < sp.tasks.size(); ++i)
    k[sp.tasks[i]] = a[i] == kAnyCpu ? ProcKind::CPU : pl.processors[a[i]].kind;
  return k;
}

inline Pins pins_for(const Dag& dag, const AssignmentSpace& sp, const std::vector<std::size_t>& a) {
  Pins pins(dag.nodes.size());
  for (std::size_t i = 0; i < sp.tasks.size(); ++i)
    if (a[i] != kAnyCpu) pins[sp.tasks[i]] = a[i];
  return pins;
}

/// Dag whose tasks in the space only admit the kind chosen by `a`.
inline Dag restrict_to(const Dag& dag, const Platform& pl, const AssignmentSpace& sp, const std::vector<std::size_t>& a) {
  Dag d = dag;
  const auto kinds = kinds_under(dag, pl, sp, a);
  for (auto t : sp.tasks) d.nodes[t].eligibility = {kinds[t]};
  return d;
}

/// Fixes every task's cost table to a single entry: the measured time on
/// the kind it runs on under `a`.
inline Dag instantiate(const Dag& dag, const Platform& pl, const AssignmentSpace& sp, const std::vector<std::size_t>& a,
                       const TaskPerf& perf) {
  Dag d = dag;
  const auto kinds = kinds_under(dag, pl, sp, a);
  for (std::size_t t = 0; t < d.nodes.size(); ++t) {
    auto& n = d.nodes[t];
    auto it = perf.find(n.id);
    if (it == perf.end() || !std::isfinite(it->second) || it->second <= 0.0)
      throw Error("no measurement for task " + n.id);
    n.costs = {{kinds[t], it->second}};
    n.eligibility = {kinds[t]};
  }
  return d;
}

// ---------------------------------------------------------------------------
// candidate evaluation
// ---------------------------------------------------------------------------

/// Lexicographic: worst module miss rate, worst p99 / deadline, makespan.
struct Score {
  double miss_rate = 0.0;
  double p99_ratio = 0.0;
  double makespan = 0.0;
  auto key() const { return std::tie(miss_rate, p99_ratio, makespan); }
  bool operator<(const Score& o) const { return key() < o.key(); }
  bool operator<=(const Score& o) const { return !(o < *this); }
  bool operator==(const Score& o) const { return key() == o.key(); }
};

inline Score score_of(const MissReport& m, const Schedule& s) {
  Score sc;
  for (const auto& mod : m.modules) {
    sc.miss_rate = std::max(sc.miss_rate, mod.timed_out ? 1.0 : mod.miss_rate);
    sc.p99_ratio = std::max(sc.p99_ratio, mod.timed_out ? std::numeric_limits<double>::infinity()
                                                        : mod.p99_ms / mod.deadline_ms);
  }
  sc.makespan = s.makespan;
  return sc;
}

struct MeasuredCandidate {
  std::vector<std::size_t> assignment;  // per entry of AssignmentSpace::tasks
  Dag instantiated;
  Schedule schedule;
  TaskPerf measured;
  std::vector<std::string> unmeasured;  // kept their static cost
  MissReport misses;
  EnergyReport energy;
  Score score;
};

namespace detail {

inline SimConfig with_horizon(SimConfig c, const SearchOptions& opt) {
  if (opt.candidate_horizon_ms > 0.0) c.horizon_ms = opt.candidate_horizon_ms;
  c.record_trace = false;
  return c;
}

inline TaskPerf to_perf(const Dag& dag, const std::vector<double>& v, const std::vector<ProcKind>& kinds,
                        std::vector<std::string>& unmeasured) {
  TaskPerf p;
  for (std::size_t t = 0; t < dag.nodes.size(); ++t) {
    double x = v[t];
    if (!std::isfinite(x) || x <= 0.0) {
      x = dag.nodes[t].cost(kinds[t]);
      unmeasured.push_back(dag.nodes[t].id);
    }
    p[dag.nodes[t].id] = x;
  }
  return p;
}

}  // namespace detail

/// Reschedules `dag` on measurements `perf` under assignment `a` and
/// simulates the new schedule with `cfg`.
inline MeasuredCandidate evaluate_with(const Dag& dag, const Platform& pl, const AssignmentSpace& sp,
                                       const std::vector<std::size_t>& a, TaskPerf perf,
                                       std::vector<std::string> unmeasured, const SimConfig& cfg) {
  MeasuredCandidate c;
  c.assignment = a;
  c.measured = std::move(perf);
  c.unmeasured = std::move(unmeasured);
  c.instantiated = instantiate(dag, pl, sp, a, c.measured);
  c.schedule = schedule_heft(c.instantiated, pl, compute_ranks(c.instantiated), pins_for(dag, sp, a));
  auto r = simulate(dag, pl, c.schedule, cfg);
  c.misses = std::move(r.misses);
  c.energy = std::move(r.energy);
  c.score = score_of(c.misses, c.schedule);
  return c;
}

/// One candidate: default-schedule (time-sharing) measurement, then
/// instantiation, list scheduling and simulation under `cfg`.
inline MeasuredCandidate evaluate_candidate(const Dag& dag, const Platform& pl, const AssignmentSpace& sp,
                                            const std::vector<std::size_t>& a, const SimConfig& cfg,
                                            const SearchOptions& opt = {}) {
  const auto sim_cfg = detail::with_horizon(cfg, opt);
  auto measure_cfg = sim_cfg;
  measure_cfg.policy.policy = Policy::TIME_SHARING;
  const Dag restricted = restrict_to(dag, pl, sp, a);
  const auto pins = pins_for(dag, sp, a);
  const auto default_schedule = schedule_heft(restricted, pl, compute_ranks(restricted), pins);
  const auto perf = measure_task_perf(dag, pl, default_schedule, measure_cfg);
  std::vector<std::string> unmeasured;
  auto tp = detail::to_perf(dag, perf, kinds_under(dag, pl, sp, a), unmeasured);
  return evaluate_with(dag, pl, sp, a, std::move(tp), std::move(unmeasured), sim_cfg);
}

/// Runs `fn(i)` for i in [0, n) on up to `jobs` threads.
template <class Fn>
void parallel_for(std::size_t n, int jobs, Fn fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, jobs)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct SearchResult {
  AssignmentSpace space;
  std::vector<MeasuredCandidate> candidates;  // enumeration order
  std::size_t best = 0;

  const MeasuredCandidate& winner() const { return candidates[best]; }
};

inline std::size_t argmin_score(const std::vector<MeasuredCandidate>& cs) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < cs.size(); ++i)
    if (cs[i].score < cs[best].score) best = i;
  return best;
}

inline SearchResult schedule_by_instantiation(const Dag& dag, const Platform& pl, const SimConfig& cfg,
                                              const SearchOptions& opt = {}) {
  SearchResult r;
  r.space = enumerate_assignments(dag, pl, opt);
  r.candidates.resize(r.space.assignments.size());
  parallel_for(r.candidates.size(), opt.jobs, [&](std::size_t i) {
    r.candidates[i] = evaluate_candidate(dag, pl, r.space, r.space.assignments[i], cfg, opt);
  });
  r.best = argmin_score(r.candidates);
  return r;
}

struct IterationResult {
  SearchResult initial;          // first round
  MeasuredCandidate best;        // best seen over all rounds
  std::vector<Score> best_seen;  // after each round
  int iterations = 0;
  bool converged = false;
};

/// Alternates rescheduling on the latest measurements and re-measuring
/// under the new schedule, until the schedule stops changing or
/// `max_iters` rounds ran. Returns the best candidate seen.
inline IterationResult iterate_corun_schedule(const Dag& dag, const Platform& pl, const SimConfig& cfg, int max_iters,
                                              const SearchOptions& opt = {}) {
  if (max_iters < 1) throw Error("max_iters must be >= 1");
  IterationResult out;
  out.initial = schedule_by_instantiation(dag, pl, cfg, opt);
  out.best = out.initial.winner();
  out.best_seen.push_back(out.best.score);
  out.iterations = 1;
  const auto sim_cfg = detail::with_horizon(cfg, opt);
  const auto& sp = out.initial.space;

  std::vector<MeasuredCandidate> current;
  if (opt.reenumerate) current = out.initial.candidates;
  else current = {out.initial.winner()};

  for (int it = 2; it <= max_iters; ++it) {
    std::vector<MeasuredCandidate> next(current.size());
    std::vector<char> same(current.size(), 0);
    parallel_for(current.size(), opt.jobs, [&](std::size_t i) {
      const auto& cur = current[i];
      const auto perf = measure_task_perf(dag, pl, cur.schedule, sim_cfg);
      std::vector<std::string> unmeasured;
      auto tp = detail::to_perf(dag, perf, kinds_under(dag, pl, sp, cur.assignment), unmeasured);
      auto inst = instantiate(dag, pl, sp, cur.assignment, tp);
      auto sch = schedule_heft(inst, pl, compute_ranks(inst), pins_for(dag, sp, cur.assignment));
      if (sch.assignment == cur.schedule.assignment && sch.priorities == cur.schedule.priorities &&
          sch.host == cur.schedule.host) {
        same[i] = 1;
        next[i] = cur;
        return;
      }
      next[i] = evaluate_with(dag, pl, sp, cur.assignment, std::move(tp), std::move(unmeasured), sim_cfg);
    });
    out.iterations = it;
    for (const auto& c : next)
      if (c.score < out.best.score) out.best = c;
    out.best_seen.push_back(out.best.score);
    current = std::move(next);
    if (std::all_of(same.begin(), same.end(), [](char s) { return s != 0; })) {
      out.converged = true;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

inline json to_json(const Score& s) {
  return {{"miss_rate", detail::finite_or_null(s.miss_rate)},
          {"p99_over_deadline", detail::finite_or_null(s.p99_ratio)},
          {"makespan_ms", detail::finite_or_null(s.makespan)}};
}

inline json assignment_json(const Dag& dag, const Platform& pl, const AssignmentSpace& sp,
                            const std::vector<std::size_t>& a) {
  json j = json::object();
  for (std::size_t i = 0; i < sp.tasks.size(); ++i)
    j[dag.nodes[sp.tasks[i]].id] = a[i] == kAnyCpu ? std::string("cpu") : pl.processors[a[i]].id;
  return j;
}

/// Candidates report: one record per assignment with its score components.
inline json candidates_json(const Dag& dag, const Platform& pl, const SearchResult& r) {
  json list = json::array();
  for (std::size_t i = 0; i < r.candidates.size(); ++i) {
    const auto& c = r.candidates[i];
    json rec = {{"index", i},
                {"assignment", assignment_json(dag, pl, r.space, c.assignment)},
                {"score", to_json(c.score)},
                {"starved", c.misses.starved}};
    if (!c.unmeasured.empty()) rec["unmeasured"] = c.unmeasured;
    list.push_back(rec);
  }
  return {{"version", 1},
          {"space_size", r.space.full_size},
          {"enumerated", r.candidates.size()},
          {"symmetry_reduced", r.space.reduced},
          {"best", r.best},
          {"candidates", list}};
}

}  // namespace scad
