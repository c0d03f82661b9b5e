#pragma once

// Deterministic discrete-event simulation of a Dag executing under a
// Schedule and a CPU priority policy, with FIFO accelerator engines.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <limits>
#include <map>
#include <queue>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "scad/dag.hpp"
#include "scad/heft.hpp"
#include "scad/partition.hpp"

namespace scad {

enum class Policy : std::uint8_t { TIME_SHARING, STATIC_RT, JIT_RT };

inline std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::TIME_SHARING: return "TIME_SHARING";
    case Policy::STATIC_RT: return "STATIC_RT";
    case Policy::JIT_RT: return "JIT_RT";
  }
  return "?";
}

inline std::optional<Policy> parse_policy(std::string_view s) {
  if (s == "TIME_SHARING") return Policy::TIME_SHARING;
  if (s == "STATIC_RT") return Policy::STATIC_RT;
  if (s == "JIT_RT") return Policy::JIT_RT;
  return std::nullopt;
}

struct PolicyConfig {
  Policy policy = Policy::JIT_RT;
  double quantum_ms = 10.0;    // round-robin slice for default-priority threads
  double slack_factor = 1.10;  // deadline tolerance
};

struct SimConfig {
  PolicyConfig policy;
  double horizon_ms = 60000.0;
  std::uint64_t seed = 1;
  double noise_sigma = 0.05;
  double gpu_corun_slope = 0.15;  // f(k) = 1 + slope * (k - 1)
  double dla_corun_slope = 0.0;
  double host_fraction = 0.05;  // share of an accelerator task's cost spent on its host core
  double assistant_fraction = 0.2;
  std::map<Category, double> assistant_fraction_by_category;
  double switch_penalty_ms = 1.0;
  bool drop_oldest = true;  // false: a full input slot rejects the newest item
  bool record_trace = false;
  /// Device phases replacing the single device phase of a task placed on
  /// a DLA, keyed by task id (fallback plans of partially supported models).
  std::map<std::string, std::vector<Phase>> device_plans;

  double assistant_share(Category c) const {
    auto it = assistant_fraction_by_category.find(c);
    return it == assistant_fraction_by_category.end() ? assistant_fraction : it->second;
  }
};

enum class TraceKind : std::uint8_t { activate, start, preempt, resume, finish, deadline_miss, priority_raise, priority_drop };

inline std::string_view to_string(TraceKind k) {
  constexpr std::string_view names[] = {"activate", "start",    "preempt",        "resume",
                                        "finish",   "deadline_miss", "priority_raise", "priority_drop"};
  return names[static_cast<int>(k)];
}

struct TraceEvent {
  std::int64_t time_us = 0;
  TraceKind kind = TraceKind::activate;
  int task = 0;
  int thread = 0;  // 0 = main thread
  int proc = -1;   // processor index, -1 when not bound
  bool operator==(const TraceEvent&) const = default;
};

struct SimTrace {
  std::vector<TraceEvent> events;
  std::int64_t horizon_us = 0;
  bool operator==(const SimTrace&) const = default;
};

struct ModuleStats {
  Category category = Category::Sensing;
  double deadline_ms = 0.0;  // expected latency x slack
  int completed = 0;         // on time
  int missed = 0;
  double miss_rate = 0.0;
  bool timed_out = false;
  std::size_t samples = 0;
  double mean_ms = 0.0;
  double std_ms = 0.0;
  double p99_ms = 0.0;
  double max_ms = 0.0;
};

struct MissReport {
  std::vector<ModuleStats> modules;  // categories present in the dag, enum order
  std::vector<std::string> starved;  // task ids with zero completions

  const ModuleStats* module(Category c) const {
    for (const auto& m : modules)
      if (m.category == c) return &m;
    return nullptr;
  }
  double overall_miss_rate() const {
    long missed = 0, total = 0;
    for (const auto& m : modules) {
      missed += m.missed;
      total += m.missed + m.completed;
    }
    return static_cast<double>(missed) / static_cast<double>(std::max(1L, total));
  }
};

struct ProcessorEnergy {
  std::string id;
  ProcKind kind = ProcKind::CPU;
  double busy_ms = 0.0;
  double power_watts = 0.0;
  double joules = 0.0;
};

struct EnergyReport {
  std::vector<ProcessorEnergy> processors;
  double total_joules = 0.0;
  double average_power_watts = 0.0;

  double joules_of(ProcKind k) const {
    double s = 0.0;
    for (const auto& p : processors)
      if (p.kind == k) s += p.joules;
    return s;
  }
  double share_of(ProcKind k) const { return total_joules > 0.0 ? joules_of(k) / total_joules : 0.0; }
};

struct TaskStats {
  long activations = 0;
  long finishes = 0;
  long drops = 0;
  double observed_ms = 0.0;  // summed execution intervals of finished items
};

struct SimResult {
  SimTrace trace;
  MissReport misses;
  EnergyReport energy;
  std::vector<TaskStats> tasks;
  std::vector<std::vector<double>> latencies;  // per module (same order as misses.modules), ms
};

namespace detail {

inline std::int64_t to_us(double ms) { return static_cast<std::int64_t>(std::llround(ms * 1000.0)); }

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Box-Muller over mt19937_64 so the stream is identical across
/// standard libraries.
class NoiseStream {
 public:
  NoiseStream(std::uint64_t seed, double sigma) : rng_(seed), sigma_(sigma) {}
  double factor() {
    if (sigma_ <= 0.0) return 1.0;
    const double u1 = (static_cast<double>(rng_() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(rng_() >> 11) * 0x1.0p-53;
    const double z = std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    return std::max(0.1, 1.0 + sigma_ * z);
  }

 private:
  std::mt19937_64 rng_;
  double sigma_;
};

class Simulator {
 public:
  Simulator(const Dag& dag, const Platform& pl, const Schedule& s, const SimConfig& cfg)
      : dag_(dag), pl_(pl), sch_(s), cfg_(cfg), topo_(dag) {}

  SimResult run() {
    setup();
    const std::int64_t horizon = to_us(cfg_.horizon_ms);
    for (std::size_t t = 0; t < n_; ++t)
      if (dag_.nodes[t].period_ms) push(0, static_cast<int>(t), EvTimer, 0, -1);
    while (!events_.empty() && events_.top().t <= horizon) {
      now_ = events_.top().t;
      while (!events_.empty() && events_.top().t == now_) {
        Ev e = events_.top();
        events_.pop();
        handle(e);
      }
      reschedule();
    }
    now_ = horizon;
    return finish(horizon);
  }

 private:
  enum EvType : std::uint8_t { EvTimer, EvDeliver, EvCoreTick, EvDeviceDone };
  struct Ev {
    std::int64_t t;
    int task;
    std::uint64_t seq;
    EvType type;
    int a;           // edge / core / device
    std::int64_t b;  // stamp / generation
    bool operator>(const Ev& o) const {
      if (t != o.t) return t > o.t;
      if (task != o.task) return task > o.task;
      return seq > o.seq;
    }
  };
  struct Item {
    std::int64_t stamp = -1;  // module entry time, -1 until known
  };
  struct WorkPhase {
    int device = -1;  // processor index of an accelerator, -1 for CPU
    std::int64_t work = 0;
  };
  struct Thread {
    int task = 0;
    int index = 0;  // 0 main
    bool runnable = false;
    bool rt = false;
    int priority = 0;
    int pinned = -1;
    int pool = 0;
    int core = -1;
    std::int64_t remaining = 0;
    std::int64_t run_start = 0;
    std::int64_t quantum_start = 0;
    bool unit_started = false;
  };
  struct TaskState {
    std::vector<char> arrived;  // per incoming trigger edge slot
    std::vector<std::int64_t> in_stamp;
    std::optional<Item> pending;
    bool active = false;
    Item cur;
    std::vector<WorkPhase> phases;
    std::size_t phase = 0;
    std::vector<int> threads;
  };
  struct Job {
    int task = 0;
    std::int64_t work = 0;
    std::int64_t submit = 0;
    int priority = 0;
  };
  struct Device {
    std::vector<Job> queue;
    std::optional<Job> running;
    std::int64_t started = 0;
    double corun = 1.0;
  };

  const Dag& dag_;
  const Platform& pl_;
  const Schedule& sch_;
  const SimConfig& cfg_;
  Topology topo_;
  std::size_t n_ = 0;
  std::int64_t now_ = 0;
  std::uint64_t seq_ = 0;
  std::priority_queue<Ev, std::vector<Ev>, std::greater<>> events_;

  std::vector<Thread> threads_;
  std::vector<TaskState> ts_;
  std::vector<std::vector<int>> trig_slot_;  // task -> edge index -> slot (or -1)
  std::vector<int> trig_count_;
  std::vector<NoiseStream> noise_;
  std::vector<int> core_occ_;
  std::vector<std::uint64_t> core_gen_;
  std::vector<char> core_dirty_;
  std::vector<int> core_pool_;
  std::vector<int> cpu_cores_;
  std::deque<int> pool_queue_[2];
  std::map<int, Device> devices_;
  int first_gpu_ = -1;
  std::vector<double> busy_us_;
  std::vector<double> observed_cur_;
  std::vector<char> is_exit_;
  std::vector<int> module_of_;  // task -> module slot
  std::vector<Category> modules_;
  std::vector<std::int64_t> deadline_us_;
  std::vector<int> on_time_, late_;  // per module

  SimResult res_;

  void push(std::int64_t t, int task, EvType type, int a, std::int64_t b) {
    events_.push({t, task, seq_++, type, a, b});
  }
  void trace(TraceKind k, int task, int thread, int proc) {
    if (cfg_.record_trace) res_.trace.events.push_back({now_, k, task, thread, proc});
  }

  void setup() {
    n_ = dag_.nodes.size();
    res_.tasks.assign(n_, {});
    ts_.assign(n_, {});
    busy_us_.assign(pl_.processors.size(), 0.0);
    observed_cur_.assign(n_, 0.0);
    core_occ_.assign(pl_.processors.size(), -1);
    core_gen_.assign(pl_.processors.size(), 0);
    core_dirty_.assign(pl_.processors.size(), 0);
    core_pool_.assign(pl_.processors.size(), 0);
    for (std::size_t p = 0; p < pl_.processors.size(); ++p) {
      const auto kind = pl_.processors[p].kind;
      if (kind == ProcKind::CPU) {
        cpu_cores_.push_back(static_cast<int>(p));
        core_pool_[p] = pl_.is_reserved(p) ? 1 : 0;
      } else {
        devices_[static_cast<int>(p)] = Device{};
        if (kind == ProcKind::GPU && first_gpu_ < 0) first_gpu_ = static_cast<int>(p);
      }
    }

    trig_slot_.assign(n_, {});
    trig_count_.assign(n_, 0);
    for (std::size_t t = 0; t < n_; ++t) trig_slot_[t].assign(dag_.edges.size(), -1);
    for (std::size_t e = 0; e < dag_.edges.size(); ++e) {
      auto v = topo_.dst[e];
      if (dag_.edges[e].trigger && !dag_.nodes[v].period_ms) trig_slot_[v][e] = trig_count_[v]++;
    }

    // modules and exits
    std::map<Category, int> slot;
    for (auto c : kAllCategories)
      for (const auto& nd : dag_.nodes)
        if (nd.category == c && !slot.count(c)) {
          slot[c] = static_cast<int>(modules_.size());
          modules_.push_back(c);
        }
    module_of_.resize(n_);
    is_exit_.assign(n_, 1);
    deadline_us_.resize(n_);
    for (std::size_t t = 0; t < n_; ++t) {
      module_of_[t] = slot[dag_.nodes[t].category];
      deadline_us_[t] = to_us(dag_.nodes[t].deadline_ms * cfg_.policy.slack_factor);
      for (auto e : topo_.succ_edges[t])
        if (dag_.nodes[topo_.dst[e]].category == dag_.nodes[t].category) is_exit_[t] = 0;
    }
    res_.latencies.assign(modules_.size(), {});
    on_time_.assign(modules_.size(), 0);
    late_.assign(modules_.size(), 0);

    // co-run factors from the static device population
    std::map<int, std::set<int>> users;
    for (std::size_t t = 0; t < n_; ++t) {
      for (int d : device_targets(static_cast<int>(t))) users[d].insert(static_cast<int>(t));
    }
    for (auto& [p, dev] : devices_) {
      const double k = static_cast<double>(users[p].size());
      const double slope = pl_.processors[p].kind == ProcKind::GPU ? cfg_.gpu_corun_slope : cfg_.dla_corun_slope;
      dev.corun = k > 1.0 ? 1.0 + slope * (k - 1.0) : 1.0;
    }

    // threads
    const bool has_reserved = pl_.has_reserved_cpu();
    for (std::size_t t = 0; t < n_; ++t) {
      noise_.emplace_back(splitmix64(cfg_.seed * 0x100000001b3ULL + t), cfg_.noise_sigma);
      const auto& nd = dag_.nodes[t];
      for (int i = 0; i < std::max(1, nd.threads); ++i) {
        Thread th;
        th.task = static_cast<int>(t);
        th.index = i;
        th.priority = sch_.priorities[t];
        th.pinned = static_cast<int>(sch_.host[t]);
        th.pool = runs_on_reserved(nd.category) && has_reserved ? 1 : 0;
        th.rt = cfg_.policy.policy == Policy::STATIC_RT;
        ts_[t].threads.push_back(static_cast<int>(threads_.size()));
        threads_.push_back(th);
      }
    }
    res_.trace.horizon_us = to_us(cfg_.horizon_ms);
  }

  std::vector<int> device_targets(int t) const {
    std::vector<int> out;
    const auto p = static_cast<int>(sch_.assignment[t]);
    if (pl_.processors[p].kind == ProcKind::CPU) return out;
    out.push_back(p);
    auto it = cfg_.device_plans.find(dag_.nodes[t].id);
    if (it != cfg_.device_plans.end() && pl_.processors[p].kind == ProcKind::DLA)
      for (const auto& ph : it->second)
        if (ph.device != pl_.processors[p].kind && first_gpu_ >= 0 && ph.device == ProcKind::GPU &&
            std::find(out.begin(), out.end(), first_gpu_) == out.end())
          out.push_back(first_gpu_);
    return out;
  }

  // ---- events ------------------------------------------------------------

  void handle(const Ev& e) {
    switch (e.type) {
      case EvTimer: {
        const auto& nd = dag_.nodes[e.task];
        push(now_ + to_us(*nd.period_ms), e.task, EvTimer, 0, -1);
        enqueue(e.task, Item{});
        break;
      }
      case EvDeliver: {
        const int slot = trig_slot_[e.task][e.a];
        if (slot < 0) break;
        auto& st = ts_[e.task];
        if (st.arrived.empty()) {
          st.arrived.assign(trig_count_[e.task], 0);
          st.in_stamp.assign(trig_count_[e.task], -1);
        }
        st.arrived[slot] = 1;
        st.in_stamp[slot] = e.b;
        if (std::all_of(st.arrived.begin(), st.arrived.end(), [](char c) { return c != 0; })) {
          Item it;
          for (auto s : st.in_stamp)
            if (s >= 0) it.stamp = it.stamp < 0 ? s : std::min(it.stamp, s);
          std::fill(st.arrived.begin(), st.arrived.end(), 0);
          std::fill(st.in_stamp.begin(), st.in_stamp.end(), -1);
          enqueue(e.task, it);
        }
        break;
      }
      case EvCoreTick: core_tick(e.a, static_cast<std::uint64_t>(e.b)); break;
      case EvDeviceDone: device_done(e.a); break;
    }
  }

  void enqueue(int t, Item it) {
    auto& st = ts_[t];
    ++res_.tasks[t].activations;
    trace(TraceKind::activate, t, 0, static_cast<int>(sch_.assignment[t]));
    if (!st.active) {
      st.pending = it;
      begin_item(t);
      return;
    }
    if (st.pending) {
      ++res_.tasks[t].drops;
      if (!cfg_.drop_oldest) return;
    }
    st.pending = it;
  }

  void begin_item(int t) {
    auto& st = ts_[t];
    st.cur = *st.pending;
    st.pending.reset();
    st.active = true;
    if (st.cur.stamp < 0) st.cur.stamp = now_;
    observed_cur_[t] = 0.0;
    build_phases(t);
    const auto& nd = dag_.nodes[t];
    const double main_ms = nd.cost(pl_.processors[sch_.assignment[t]].kind) * pl_.processors[sch_.assignment[t]].speed_factor;
    for (std::size_t i = 1; i < st.threads.size(); ++i) {
      auto& th = threads_[st.threads[i]];
      const auto add = to_us(main_ms * cfg_.assistant_share(nd.category));
      if (add <= 0) continue;
      if (th.core >= 0) {
        settle(th.core);
        core_dirty_[th.core] = 1;
      }
      const bool was = th.remaining > 0;
      th.remaining += add;
      if (!was) {
        th.unit_started = false;
        make_runnable(st.threads[i]);
      }
    }
    if (cfg_.policy.policy == Policy::JIT_RT) {
      auto& m = threads_[st.threads[0]];
      m.rt = true;
      trace(TraceKind::priority_raise, t, 0, m.pinned);
    }
    st.phase = 0;
    start_phase(t);
  }

  void build_phases(int t) {
    auto& st = ts_[t];
    st.phases.clear();
    const auto p = static_cast<int>(sch_.assignment[t]);
    const auto& proc = pl_.processors[p];
    const double cost = dag_.nodes[t].cost(proc.kind) * proc.speed_factor;
    auto& rng = noise_[t];
    if (proc.kind == ProcKind::CPU) {
      st.phases.push_back({-1, std::max<std::int64_t>(1, to_us(cost * rng.factor()))});
      return;
    }
    const double host = cost * cfg_.host_fraction;
    if (host > 0.0) st.phases.push_back({-1, std::max<std::int64_t>(1, to_us(host * rng.factor()))});
    const double dev_total = cost - host;
    auto it = cfg_.device_plans.find(dag_.nodes[t].id);
    if (it == cfg_.device_plans.end() || it->second.empty() || proc.kind != ProcKind::DLA) {
      st.phases.push_back({p, std::max<std::int64_t>(1, to_us(dev_total * rng.factor() * devices_[p].corun))});
      return;
    }
    double sum = 0.0;
    for (const auto& ph : it->second) sum += ph.ms + ph.switch_ms;
    for (const auto& ph : it->second) {
      int d = ph.device == proc.kind ? p : first_gpu_;
      if (d < 0) throw StructuralError("device plan of " + dag_.nodes[t].id + " needs a GPU");
      const double ms = dev_total * (ph.ms + ph.switch_ms) / sum;
      st.phases.push_back({d, std::max<std::int64_t>(1, to_us(ms * rng.factor() * devices_[d].corun))});
    }
  }

  void start_phase(int t) {
    auto& st = ts_[t];
    if (st.phase >= st.phases.size()) {
      complete_item(t);
      return;
    }
    const auto& ph = st.phases[st.phase];
    if (ph.device < 0) {
      auto& m = threads_[st.threads[0]];
      m.remaining = ph.work;
      m.unit_started = false;
      make_runnable(st.threads[0]);
    } else {
      devices_[ph.device].queue.push_back({t, ph.work, now_, sch_.priorities[t]});
    }
  }

  void complete_item(int t) {
    auto& st = ts_[t];
    auto& stats = res_.tasks[t];
    ++stats.finishes;
    stats.observed_ms += observed_cur_[t] / 1000.0;
    if (is_exit_[t]) {
      const auto lat = now_ - st.cur.stamp;
      res_.latencies[module_of_[t]].push_back(static_cast<double>(lat) / 1000.0);
      if (lat > deadline_us_[t]) {
        ++late_[module_of_[t]];
        trace(TraceKind::deadline_miss, t, 0, static_cast<int>(sch_.assignment[t]));
      } else {
        ++on_time_[module_of_[t]];
      }
    }
    for (auto e : topo_.succ_edges[t]) {
      const auto v = topo_.dst[e];
      const auto cu = to_us(detail::comm_between(dag_.edges[e], pl_, sch_.assignment[t], sch_.assignment[v]));
      const std::int64_t stamp = dag_.nodes[v].category == dag_.nodes[t].category ? st.cur.stamp : -1;
      push(now_ + cu, static_cast<int>(v), EvDeliver, static_cast<int>(e), stamp);
    }
    st.active = false;
    if (cfg_.policy.policy == Policy::JIT_RT) {
      threads_[st.threads[0]].rt = false;
      trace(TraceKind::priority_drop, t, 0, threads_[st.threads[0]].pinned);
    }
    if (st.pending) begin_item(t);
  }

  // ---- CPU ---------------------------------------------------------------

  void make_runnable(int id) {
    auto& th = threads_[id];
    th.runnable = true;
    if (!th.rt) pool_queue_[th.pool].push_back(id);
  }

  void settle(int core) {
    const int id = core_occ_[core];
    if (id < 0) return;
    auto& th = threads_[id];
    const auto el = now_ - th.run_start;
    if (el > 0) {
      th.remaining -= el;
      busy_us_[core] += static_cast<double>(el);
      if (th.index == 0) observed_cur_[th.task] += static_cast<double>(el);
    }
    th.run_start = now_;
  }

  void place(int id, int core) {
    auto& th = threads_[id];
    th.core = core;
    th.run_start = now_;
    th.quantum_start = now_;
    core_occ_[core] = id;
    core_dirty_[core] = 1;
    trace(th.unit_started ? TraceKind::resume : TraceKind::start, th.task, th.index, core);
    th.unit_started = true;
  }

  void unplace(int core, bool front) {
    const int id = core_occ_[core];
    settle(core);
    auto& th = threads_[id];
    th.core = -1;
    core_occ_[core] = -1;
    ++core_gen_[core];
    trace(TraceKind::preempt, th.task, th.index, core);
    if (!th.rt) {
      if (front)
        pool_queue_[th.pool].push_front(id);
      else
        pool_queue_[th.pool].push_back(id);
    }
  }

  void core_tick(int core, std::uint64_t gen) {
    if (gen != core_gen_[core] || core_occ_[core] < 0) return;
    settle(core);
    const int id = core_occ_[core];
    auto& th = threads_[id];
    if (th.remaining <= 0) {
      th.remaining = 0;
      th.runnable = false;
      th.core = -1;
      core_occ_[core] = -1;
      ++core_gen_[core];
      trace(TraceKind::finish, th.task, th.index, core);
      if (th.index == 0) {
        ++ts_[th.task].phase;
        start_phase(th.task);
      }
      return;
    }
    // quantum expiry of a default-priority thread
    if (!pool_queue_[th.pool].empty()) {
      unplace(core, false);
    } else {
      th.quantum_start = now_;
      core_dirty_[core] = 1;
    }
  }

  bool beats(const Thread& a, int ida, const Thread& b, int idb) const {
    if (a.priority != b.priority) return a.priority > b.priority;
    if ((a.index == 0) != (b.index == 0)) return a.index == 0;
    return ida < idb;
  }

  void reschedule() {
    // real-time winners per core
    std::vector<int> best(pl_.processors.size(), -1);
    for (std::size_t i = 0; i < threads_.size(); ++i) {
      const auto& th = threads_[i];
      if (!th.runnable || !th.rt) continue;
      int& b = best[th.pinned];
      if (b < 0 || beats(th, static_cast<int>(i), threads_[b], b)) b = static_cast<int>(i);
    }
    for (int c : cpu_cores_) {
      const int occ = core_occ_[c];
      if (best[c] >= 0) {
        if (occ == best[c]) continue;
        if (occ >= 0) unplace(c, true);
        place(best[c], c);
      } else if (occ >= 0 && threads_[occ].rt) {
        unplace(c, true);  // demoted or no longer the winner
      }
    }
    for (int c : cpu_cores_) {
      if (core_occ_[c] >= 0) continue;
      auto& q = pool_queue_[core_pool_[c]];
      while (!q.empty()) {
        const int id = q.front();
        q.pop_front();
        const auto& th = threads_[id];
        if (!th.runnable || th.rt || th.core >= 0) continue;  // stale entry
        place(id, c);
        break;
      }
    }
    const auto quantum = to_us(cfg_.policy.quantum_ms);
    for (int c : cpu_cores_) {
      if (!core_dirty_[c]) continue;
      core_dirty_[c] = 0;
      const int id = core_occ_[c];
      if (id < 0) continue;
      const auto& th = threads_[id];
      std::int64_t at = th.run_start + std::max<std::int64_t>(0, th.remaining);
      if (!th.rt) at = std::min(at, th.quantum_start + quantum);
      ++core_gen_[c];
      push(at, th.task, EvCoreTick, c, static_cast<std::int64_t>(core_gen_[c]));
    }
    // accelerators: FIFO by submission, then priority, then task index
    for (auto& [p, dev] : devices_) {
      if (dev.running || dev.queue.empty()) continue;
      auto it = std::min_element(dev.queue.begin(), dev.queue.end(), [](const Job& a, const Job& b) {
        if (a.submit != b.submit) return a.submit < b.submit;
        if (a.priority != b.priority) return a.priority > b.priority;
        return a.task < b.task;
      });
      dev.running = *it;
      dev.queue.erase(it);
      dev.started = now_;
      trace(TraceKind::start, dev.running->task, 0, p);
      push(now_ + dev.running->work, dev.running->task, EvDeviceDone, p, 0);
    }
  }

  void device_done(int p) {
    auto& dev = devices_[p];
    const Job job = *dev.running;
    dev.running.reset();
    busy_us_[p] += static_cast<double>(job.work);
    observed_cur_[job.task] += static_cast<double>(job.work);
    trace(TraceKind::finish, job.task, 0, p);
    ++ts_[job.task].phase;
    start_phase(job.task);
  }

  // ---- reports -----------------------------------------------------------

  SimResult finish(std::int64_t horizon) {
    for (int c : cpu_cores_) settle(c);
    for (auto& [p, dev] : devices_)
      if (dev.running) busy_us_[p] += static_cast<double>(std::min(horizon, dev.started + dev.running->work) - dev.started);

    std::vector<int> late_open(modules_.size(), 0);
    for (std::size_t t = 0; t < n_; ++t) {
      if (!is_exit_[t]) continue;
      const auto& st = ts_[t];
      if (st.active && horizon - st.cur.stamp > deadline_us_[t]) ++late_open[module_of_[t]];
      if (st.pending && st.pending->stamp >= 0 && horizon - st.pending->stamp > deadline_us_[t])
        ++late_open[module_of_[t]];
    }

    auto& mr = res_.misses;
    for (std::size_t m = 0; m < modules_.size(); ++m) {
      ModuleStats ms;
      ms.category = modules_[m];
      double dl = 0.0;
      for (std::size_t t = 0; t < n_; ++t)
        if (module_of_[t] == static_cast<int>(m) && is_exit_[t]) dl = std::max(dl, static_cast<double>(deadline_us_[t]) / 1000.0);
      ms.deadline_ms = dl;
      auto& lat = res_.latencies[m];
      ms.samples = lat.size();
      ms.completed = on_time_[m];
      ms.missed = late_[m] + late_open[m];
      if (lat.empty()) {
        ms.timed_out = true;
        ms.missed = std::max(ms.missed, 1);
        ms.mean_ms = ms.std_ms = ms.p99_ms = ms.max_ms = std::numeric_limits<double>::infinity();
      } else {
        double sum = 0.0;
        for (double v : lat) sum += v;
        ms.mean_ms = sum / static_cast<double>(lat.size());
        double var = 0.0;
        for (double v : lat) var += (v - ms.mean_ms) * (v - ms.mean_ms);
        ms.std_ms = std::sqrt(var / static_cast<double>(lat.size()));
        auto sorted = lat;
        std::sort(sorted.begin(), sorted.end());
        const auto idx = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(sorted.size()))) - 1;
        ms.p99_ms = sorted[std::min(idx, sorted.size() - 1)];
        ms.max_ms = sorted.back();
      }
      ms.miss_rate = static_cast<double>(ms.missed) / static_cast<double>(std::max(1, ms.completed + ms.missed));
      mr.modules.push_back(ms);
    }
    for (std::size_t t = 0; t < n_; ++t)
      if (res_.tasks[t].finishes == 0) mr.starved.push_back(dag_.nodes[t].id);

    auto& en = res_.energy;
    for (std::size_t p = 0; p < pl_.processors.size(); ++p) {
      ProcessorEnergy pe;
      pe.id = pl_.processors[p].id;
      pe.kind = pl_.processors[p].kind;
      pe.busy_ms = busy_us_[p] / 1000.0;
      pe.power_watts = pl_.processors[p].power_watts;
      pe.joules = pe.busy_ms / 1000.0 * pe.power_watts;
      en.total_joules += pe.joules;
      en.processors.push_back(pe);
    }
    en.average_power_watts = horizon > 0 ? en.total_joules / (static_cast<double>(horizon) / 1e6) : 0.0;
    return std::move(res_);
  }
};

}  // namespace detail

/// Runs the simulation. Throws StructuralError if the schedule does not
/// fit the dag/platform or the horizon is shorter than ten periods.
inline SimResult simulate(const Dag& dag, const Platform& platform, const Schedule& schedule, const SimConfig& cfg) {
  auto bad = check_schedule(dag, platform, schedule, false);
  if (!bad.empty()) throw StructuralError("invalid schedule: " + bad.front());
  if (cfg.policy.policy == Policy::TIME_SHARING && !(cfg.policy.quantum_ms > 0.0))
    throw StructuralError("quantum must be > 0 under TIME_SHARING");
  if (cfg.policy.slack_factor < 1.0) throw StructuralError("slack_factor must be >= 1");
  double longest = 0.0;
  for (const auto& n : dag.nodes)
    if (n.period_ms) longest = std::max(longest, *n.period_ms);
  if (cfg.horizon_ms < 10.0 * longest)
    throw StructuralError("horizon must cover at least ten periods of the slowest source");
  return detail::Simulator(dag, platform, schedule, cfg).run();
}

/// Mean observed execution time per task (ms): CPU run intervals of the
/// main thread plus its accelerator jobs, co-run slowdown included.
/// Tasks that never finish report +infinity.
inline std::vector<double> measure_task_perf(const Dag& dag, const Platform& platform, const Schedule& schedule,
                                             const SimConfig& cfg) {
  auto r = simulate(dag, platform, schedule, cfg);
  std::vector<double> out;
  for (const auto& t : r.tasks)
    out.push_back(t.finishes == 0 ? std::numeric_limits<double>::infinity()
                                  : t.observed_ms / static_cast<double>(t.finishes));
  return out;
}

/// Default-schedule measurement: plain HEFT under the given config.
inline std::vector<double> measure_task_perf(const Dag& dag, const Platform& platform, const SimConfig& cfg) {
  return measure_task_perf(dag, platform, schedule_heft(dag, platform), cfg);
}

// ---------------------------------------------------------------------------
// export
// ---------------------------------------------------------------------------

inline std::string trace_ndjson(const Dag& dag, const Platform& pl, const SimTrace& tr) {
  std::string out;
  for (const auto& e : tr.events) {
    json j = {{"time_us", e.time_us},
              {"kind", to_string(e.kind)},
              {"task", dag.nodes[e.task].id},
              {"thread", e.thread},
              {"proc", e.proc >= 0 ? json(pl.processors[e.proc].id) : json(nullptr)}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

namespace detail {
inline json finite_or_null(double v) { return std::isfinite(v) ? json(std::round(v * 1000.0) / 1000.0) : json(nullptr); }
}  // namespace detail

inline json to_json(const MissReport& r) {
  json mods = json::array();
  for (const auto& m : r.modules)
    mods.push_back({{"module", to_string(m.category)},
                    {"deadline_ms", detail::finite_or_null(m.deadline_ms)},
                    {"completed", m.completed},
                    {"missed", m.missed},
                    {"miss_rate", detail::finite_or_null(m.miss_rate)},
                    {"timeout", m.timed_out},
                    {"samples", m.samples},
                    {"latency_mean_ms", detail::finite_or_null(m.mean_ms)},
                    {"latency_std_ms", detail::finite_or_null(m.std_ms)},
                    {"latency_p99_ms", detail::finite_or_null(m.p99_ms)},
                    {"latency_max_ms", detail::finite_or_null(m.max_ms)}});
  return {{"modules", mods}, {"starved", r.starved}, {"overall_miss_rate", detail::finite_or_null(r.overall_miss_rate())}};
}

inline json to_json(const EnergyReport& e) {
  json procs = json::array();
  for (const auto& p : e.processors)
    procs.push_back({{"id", p.id},
                     {"kind", to_string(p.kind)},
                     {"busy_ms", detail::finite_or_null(p.busy_ms)},
                     {"power_watts", p.power_watts},
                     {"joules", detail::finite_or_null(p.joules)}});
  json share = json::object();
  for (auto k : kAllKinds) share[std::string(to_string(k))] = detail::finite_or_null(e.share_of(k));
  return {{"processors", procs},
          {"total_joules", detail::finite_or_null(e.total_joules)},
          {"average_power_watts", detail::finite_or_null(e.average_power_watts)},
          {"share", share}};
}

}  // namespace scad
