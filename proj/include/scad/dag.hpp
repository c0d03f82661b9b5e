#pragma once

// Task-DAG data model shared by the schedulers and the simulator:
// nodes, edges, platform, validation and the versioned `.dag` document.

#include <algorithm>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

namespace scad {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// errors
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed document. `location` is "line:col" for syntax errors or a
/// field path such as "nodes[3].costs.GPU" for schema errors.
class ParseError : public Error {
 public:
  ParseError(std::string location, const std::string& what)
      : Error(location.empty() ? what : location + ": " + what), location_(std::move(location)) {}
  const std::string& location() const { return location_; }

 private:
  std::string location_;
};

class StructuralError : public Error {
 public:
  using Error::Error;
};

class SchedulingError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// enums
// ---------------------------------------------------------------------------

enum class ProcKind : std::uint8_t { CPU = 0, GPU = 1, DLA = 2 };
inline constexpr std::array<ProcKind, 3> kAllKinds{ProcKind::CPU, ProcKind::GPU, ProcKind::DLA};

inline std::string_view to_string(ProcKind k) {
  switch (k) {
    case ProcKind::CPU: return "CPU";
    case ProcKind::GPU: return "GPU";
    case ProcKind::DLA: return "DLA";
  }
  return "?";
}

inline std::optional<ProcKind> parse_kind(std::string_view s) {
  for (auto k : kAllKinds)
    if (to_string(k) == s) return k;
  return std::nullopt;
}

inline bool is_accelerator(ProcKind k) { return k != ProcKind::CPU; }

/// Small bitset over processor kinds.
class KindSet {
 public:
  KindSet() = default;
  KindSet(std::initializer_list<ProcKind> ks) {
    for (auto k : ks) insert(k);
  }
  void insert(ProcKind k) { bits_ |= bit(k); }
  void erase(ProcKind k) { bits_ &= static_cast<std::uint8_t>(~bit(k)); }
  bool contains(ProcKind k) const { return (bits_ & bit(k)) != 0; }
  bool empty() const { return bits_ == 0; }
  KindSet intersect(KindSet o) const { KindSet r; r.bits_ = bits_ & o.bits_; return r; }
  std::vector<ProcKind> kinds() const {
    std::vector<ProcKind> out;
    for (auto k : kAllKinds)
      if (contains(k)) out.push_back(k);
    return out;
  }
  bool operator==(const KindSet&) const = default;

 private:
  static std::uint8_t bit(ProcKind k) { return static_cast<std::uint8_t>(1u << static_cast<unsigned>(k)); }
  std::uint8_t bits_ = 0;
};

enum class Category : std::uint8_t {
  Sensing,
  Perception2D,
  Perception3D,
  Localization,
  Tracking,
  Prediction,
  Planning,
  Control,
};
inline constexpr std::array<Category, 8> kAllCategories{
    Category::Sensing,  Category::Perception2D, Category::Perception3D, Category::Localization,
    Category::Tracking, Category::Prediction,   Category::Planning,     Category::Control};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::Sensing: return "Sensing";
    case Category::Perception2D: return "Perception2D";
    case Category::Perception3D: return "Perception3D";
    case Category::Localization: return "Localization";
    case Category::Tracking: return "Tracking";
    case Category::Prediction: return "Prediction";
    case Category::Planning: return "Planning";
    case Category::Control: return "Control";
  }
  return "?";
}

inline std::optional<Category> parse_category(std::string_view s) {
  for (auto c : kAllCategories)
    if (to_string(c) == s) return c;
  return std::nullopt;
}

/// Planning and Control are the only categories admitted on reserved cores.
inline bool runs_on_reserved(Category c) { return c == Category::Planning || c == Category::Control; }

// ---------------------------------------------------------------------------
// graph types
// ---------------------------------------------------------------------------

struct TaskNode {
  std::string id;
  std::string name;
  Category category = Category::Sensing;
  std::map<ProcKind, double> costs;  // ms per processor kind
  KindSet eligibility;
  std::optional<double> period_ms;  // sources and timer-driven nodes only
  double deadline_ms = 100.0;
  int threads = 2;  // main thread + assistants

  double cost(ProcKind k) const {
    auto it = costs.find(k);
    return it == costs.end() ? 0.0 : it->second;
  }
  /// Mean over eligible kinds.
  double mean_cost() const {
    double sum = 0.0;
    int n = 0;
    for (auto k : eligibility.kinds()) {
      sum += cost(k);
      ++n;
    }
    return n == 0 ? 0.0 : sum / n;
  }
  bool operator==(const TaskNode&) const = default;
};

using KindPair = std::pair<ProcKind, ProcKind>;

inline KindPair make_pair_key(ProcKind a, ProcKind b) { return a <= b ? KindPair{a, b} : KindPair{b, a}; }

struct Edge {
  std::string src;
  std::string dst;
  std::map<KindPair, double> comm_cost;  // ms, keyed by unordered kind pair
  double payload_rate = 0.0;             // KB per activation, informational
  bool trigger = true;                   // false: consumer samples the latest value
  bool assumed = false;                  // topology inferred rather than documented

  double comm(ProcKind a, ProcKind b) const {
    auto it = comm_cost.find(make_pair_key(a, b));
    return it == comm_cost.end() ? 0.0 : it->second;
  }
  double mean_comm() const {
    if (comm_cost.empty()) return 0.0;
    double sum = 0.0;
    for (const auto& [k, v] : comm_cost) sum += v;
    return sum / static_cast<double>(comm_cost.size());
  }
  bool operator==(const Edge&) const = default;
};

struct Dag {
  std::vector<TaskNode> nodes;
  std::vector<Edge> edges;

  std::optional<std::size_t> index_of(std::string_view id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (nodes[i].id == id) return i;
    return std::nullopt;
  }
  const TaskNode& node(std::string_view id) const {
    auto i = index_of(id);
    if (!i) throw StructuralError("unknown task '" + std::string(id) + "'");
    return nodes[*i];
  }
  bool operator==(const Dag&) const = default;
};

struct Processor {
  std::string id;
  ProcKind kind = ProcKind::CPU;
  double speed_factor = 1.0;  // multiplies cost_table entries
  double power_watts = 0.0;
  bool operator==(const Processor&) const = default;
};

struct Platform {
  std::vector<Processor> processors;
  std::set<std::string> reserved;

  std::optional<std::size_t> index_of(std::string_view id) const {
    for (std::size_t i = 0; i < processors.size(); ++i)
      if (processors[i].id == id) return i;
    return std::nullopt;
  }
  bool is_reserved(std::size_t p) const { return reserved.count(processors[p].id) != 0; }
  bool has_reserved_cpu() const {
    for (std::size_t p = 0; p < processors.size(); ++p)
      if (processors[p].kind == ProcKind::CPU && is_reserved(p)) return true;
    return false;
  }
  KindSet kinds() const {
    KindSet s;
    for (const auto& p : processors) s.insert(p.kind);
    return s;
  }
  /// Whether a task of category `c` may be placed on processor `p`.
  /// Reserved cores take only Planning/Control, and Planning/Control
  /// stay on reserved cores whenever any exist.
  bool admits(std::size_t p, Category c) const {
    if (processors[p].kind != ProcKind::CPU) return true;
    if (is_reserved(p)) return runs_on_reserved(c);
    return !(runs_on_reserved(c) && has_reserved_cpu());
  }
  bool operator==(const Platform&) const = default;
};

/// Jetson AGX Xavier-like default: 8 CPU cores (two reserved for
/// planning), one 30 W GPU and two DLAs at 1 W.
inline Platform default_platform() {
  Platform p;
  for (int i = 0; i < 8; ++i) p.processors.push_back({"cpu" + std::to_string(i), ProcKind::CPU, 1.0, 1.0});
  p.processors.push_back({"gpu0", ProcKind::GPU, 1.0, 30.0});
  p.processors.push_back({"dla0", ProcKind::DLA, 1.0, 1.0});
  p.processors.push_back({"dla1", ProcKind::DLA, 1.0, 1.0});
  p.reserved = {"cpu6", "cpu7"};
  return p;
}

/// Copy of `p` with every processor of kind `k` removed.
inline Platform without_kind(const Platform& p, ProcKind k) {
  Platform out;
  for (const auto& proc : p.processors)
    if (proc.kind != k) out.processors.push_back(proc);
  for (const auto& r : p.reserved)
    if (out.index_of(r)) out.reserved.insert(r);
  return out;
}

// ---------------------------------------------------------------------------
// adjacency
// ---------------------------------------------------------------------------

/// Index-based adjacency built once from a Dag.
struct Topology {
  std::vector<std::vector<std::size_t>> succ_edges;  // node -> edge indices
  std::vector<std::vector<std::size_t>> pred_edges;
  std::vector<std::size_t> src;  // edge -> node index
  std::vector<std::size_t> dst;

  explicit Topology(const Dag& dag) {
    std::unordered_map<std::string, std::size_t> idx;
    for (std::size_t i = 0; i < dag.nodes.size(); ++i) idx.emplace(dag.nodes[i].id, i);
    succ_edges.resize(dag.nodes.size());
    pred_edges.resize(dag.nodes.size());
    for (std::size_t e = 0; e < dag.edges.size(); ++e) {
      auto s = idx.find(dag.edges[e].src);
      auto d = idx.find(dag.edges[e].dst);
      if (s == idx.end() || d == idx.end())
        throw StructuralError("edge " + dag.edges[e].src + "->" + dag.edges[e].dst + " names an unknown node");
      src.push_back(s->second);
      dst.push_back(d->second);
      succ_edges[s->second].push_back(e);
      pred_edges[d->second].push_back(e);
    }
  }
};

/// Kahn's algorithm with ascending-index tie-breaking; nullopt on a cycle.
inline std::optional<std::vector<std::size_t>> topological_order(const Dag& dag, const Topology& topo) {
  const std::size_t n = dag.nodes.size();
  std::vector<std::size_t> indeg(n, 0);
  for (std::size_t v = 0; v < n; ++v) indeg[v] = topo.pred_edges[v].size();
  std::set<std::size_t> ready;
  for (std::size_t v = 0; v < n; ++v)
    if (indeg[v] == 0) ready.insert(v);
  std::vector<std::size_t> order;
  order.reserve(n);
  while (!ready.empty()) {
    auto v = *ready.begin();
    ready.erase(ready.begin());
    order.push_back(v);
    for (auto e : topo.succ_edges[v])
      if (--indeg[topo.dst[e]] == 0) ready.insert(topo.dst[e]);
  }
  if (order.size() != n) return std::nullopt;
  return order;
}

inline std::vector<std::size_t> topological_order(const Dag& dag) {
  Topology topo(dag);
  auto order = topological_order(dag, topo);
  if (!order) throw StructuralError("cycle detected");
  return *order;
}

namespace detail {

// First cycle reachable in index order, listed from its entry node.
inline std::vector<std::size_t> find_cycle(std::size_t n, const std::vector<std::vector<std::size_t>>& adj) {
  std::vector<int> state(n, 0);  // 0 new, 1 on stack, 2 done
  std::vector<std::size_t> stack;
  std::vector<std::size_t> cycle;
  auto dfs = [&](auto&& self, std::size_t v) -> bool {
    state[v] = 1;
    stack.push_back(v);
    for (auto w : adj[v]) {
      if (state[w] == 1) {
        auto it = std::find(stack.begin(), stack.end(), w);
        cycle.assign(it, stack.end());
        return true;
      }
      if (state[w] == 0 && self(self, w)) return true;
    }
    stack.pop_back();
    state[v] = 2;
    return false;
  };
  for (std::size_t v = 0; v < n; ++v)
    if (state[v] == 0 && dfs(dfs, v)) break;
  return cycle;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

/// Returns every violated invariant, in a deterministic order. Empty means
/// the dag and platform are well formed and every node can run somewhere.
inline std::vector<std::string> validate(const Dag& dag, const Platform& platform) {
  std::vector<std::string> out;
  if (dag.nodes.empty()) {
    out.emplace_back("no nodes");
    return out;
  }

  std::map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < dag.nodes.size(); ++i) {
    const auto& n = dag.nodes[i];
    if (n.id.empty()) out.push_back("node #" + std::to_string(i) + ": empty id");
    if (!idx.emplace(n.id, i).second) out.push_back("duplicate node id: " + n.id);
    if (n.eligibility.empty()) out.push_back("node " + n.id + ": empty eligibility");
    for (auto k : n.eligibility.kinds()) {
      auto it = n.costs.find(k);
      if (it == n.costs.end())
        out.push_back("node " + n.id + ": missing cost for eligible kind " + std::string(to_string(k)));
      else if (!(it->second > 0.0))
        out.push_back("node " + n.id + ": non-positive cost for " + std::string(to_string(k)));
    }
    if (!(n.deadline_ms > 0.0)) out.push_back("node " + n.id + ": deadline_ms must be > 0");
    if (n.threads < 1) out.push_back("node " + n.id + ": threads must be >= 1");
    if (n.period_ms && !(*n.period_ms > 0.0)) out.push_back("node " + n.id + ": period_ms must be > 0");
    if (!n.eligibility.empty() && n.eligibility.intersect(platform.kinds()).empty())
      out.push_back("eligibility: node " + n.id + " has no matching processor kind on the platform");
  }

  std::vector<std::vector<std::size_t>> adj(dag.nodes.size());
  std::vector<int> indeg(dag.nodes.size(), 0), outdeg(dag.nodes.size(), 0), trig_in(dag.nodes.size(), 0);
  bool endpoints_ok = true;
  for (const auto& e : dag.edges) {
    auto s = idx.find(e.src);
    auto d = idx.find(e.dst);
    if (s == idx.end() || d == idx.end()) {
      out.push_back("edge " + e.src + "->" + e.dst + ": unknown endpoint");
      endpoints_ok = false;
      continue;
    }
    if (e.src == e.dst) out.push_back("edge " + e.src + "->" + e.dst + ": self loop");
    for (const auto& [k, v] : e.comm_cost)
      if (v < 0.0) out.push_back("edge " + e.src + "->" + e.dst + ": negative comm cost");
    adj[s->second].push_back(d->second);
    ++outdeg[s->second];
    ++indeg[d->second];
    if (e.trigger) ++trig_in[d->second];
  }
  if (endpoints_ok) {
    auto cyc = detail::find_cycle(dag.nodes.size(), adj);
    if (!cyc.empty()) {
      std::string s = "cycle detected: ";
      for (std::size_t i = 0; i < cyc.size(); ++i) s += (i ? "," : "") + dag.nodes[cyc[i]].id;
      out.push_back(s);
    }
  }
  if (std::none_of(indeg.begin(), indeg.end(), [](int d) { return d == 0; })) out.emplace_back("no source node");
  if (std::none_of(outdeg.begin(), outdeg.end(), [](int d) { return d == 0; })) out.emplace_back("no exit node");
  for (std::size_t i = 0; i < dag.nodes.size(); ++i)
    if (trig_in[i] == 0 && !dag.nodes[i].period_ms)
      out.push_back("node " + dag.nodes[i].id + ": never activates (no period and no triggering input)");

  // platform
  std::set<std::string> pids;
  bool usable_cpu = false;
  for (const auto& p : platform.processors) {
    if (!pids.insert(p.id).second) out.push_back("platform: duplicate processor id " + p.id);
    if (!(p.speed_factor > 0.0)) out.push_back("platform: processor " + p.id + " speed_factor must be > 0");
    if (p.power_watts < 0.0) out.push_back("platform: processor " + p.id + " power_watts must be >= 0");
    if (p.kind == ProcKind::CPU && platform.reserved.count(p.id) == 0) usable_cpu = true;
  }
  for (const auto& r : platform.reserved)
    if (!pids.count(r)) out.push_back("platform: reserved processor " + r + " does not exist");
  if (!usable_cpu) out.emplace_back("platform: no CPU left after removing reserved processors");
  return out;
}

// ---------------------------------------------------------------------------
// `.dag` document
// ---------------------------------------------------------------------------

inline constexpr int kDagSchemaVersion = 1;

struct DagDocument {
  std::optional<Platform> platform;
  Dag dag;
};

namespace detail {

inline std::string line_col(std::string_view text, std::size_t byte) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return std::to_string(line) + ":" + std::to_string(col);
}

inline json parse_json(std::string_view text) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(line_col(text, e.byte == 0 ? 0 : e.byte - 1), "syntax error");
  }
}

inline void only_keys(const json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ParseError(path, "expected an object");
  for (const auto& [k, v] : j.items())
    if (std::find(allowed.begin(), allowed.end(), k) == allowed.end())
      throw ParseError(path.empty() ? k : path + "." + k, "unknown field");
}

inline const json& need(const json& j, const std::string& path, const char* key) {
  auto it = j.find(key);
  if (it == j.end()) throw ParseError(path.empty() ? key : path + "." + key, "missing field");
  return *it;
}

inline double get_number(const json& j, const std::string& path) {
  if (!j.is_number()) throw ParseError(path, "expected a number");
  return j.get<double>();
}

inline std::string get_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ParseError(path, "expected a string");
  return j.get<std::string>();
}

inline std::string pair_name(const KindPair& k) {
  return std::string(to_string(k.first)) + "-" + std::string(to_string(k.second));
}

}  // namespace detail

inline json to_json(const Platform& p) {
  json procs = json::array();
  for (const auto& q : p.processors)
    procs.push_back({{"id", q.id}, {"kind", to_string(q.kind)}, {"speed_factor", q.speed_factor},
                     {"power_watts", q.power_watts}});
  return {{"processors", procs}, {"reserved", json(std::vector<std::string>(p.reserved.begin(), p.reserved.end()))}};
}

inline Platform platform_from_json(const json& j, const std::string& path = "platform") {
  using namespace detail;
  only_keys(j, path, {"processors", "reserved"});
  Platform p;
  const auto& procs = need(j, path, "processors");
  if (!procs.is_array()) throw ParseError(path + ".processors", "expected an array");
  for (std::size_t i = 0; i < procs.size(); ++i) {
    std::string pp = path + ".processors[" + std::to_string(i) + "]";
    only_keys(procs[i], pp, {"id", "kind", "speed_factor", "power_watts"});
    Processor q;
    q.id = get_string(need(procs[i], pp, "id"), pp + ".id");
    auto kind = parse_kind(get_string(need(procs[i], pp, "kind"), pp + ".kind"));
    if (!kind) throw ParseError(pp + ".kind", "unknown processor kind");
    q.kind = *kind;
    if (procs[i].contains("speed_factor")) q.speed_factor = get_number(procs[i]["speed_factor"], pp + ".speed_factor");
    if (procs[i].contains("power_watts")) q.power_watts = get_number(procs[i]["power_watts"], pp + ".power_watts");
    p.processors.push_back(q);
  }
  if (j.contains("reserved")) {
    const auto& r = j["reserved"];
    if (!r.is_array()) throw ParseError(path + ".reserved", "expected an array");
    for (std::size_t i = 0; i < r.size(); ++i)
      p.reserved.insert(get_string(r[i], path + ".reserved[" + std::to_string(i) + "]"));
  }
  return p;
}

inline json to_json(const TaskNode& n) {
  json costs = json::object();
  for (const auto& [k, v] : n.costs) costs[std::string(to_string(k))] = v;
  json elig = json::array();
  for (auto k : n.eligibility.kinds()) elig.push_back(to_string(k));
  json j = {{"id", n.id},       {"name", n.name},         {"category", to_string(n.category)}, {"costs", costs},
            {"eligibility", elig}, {"deadline_ms", n.deadline_ms}, {"threads", n.threads}};
  if (n.period_ms) j["period_ms"] = *n.period_ms;
  return j;
}

inline json to_json(const Edge& e) {
  json comm = json::object();
  for (const auto& [k, v] : e.comm_cost) comm[detail::pair_name(k)] = v;
  json j = {{"src", e.src}, {"dst", e.dst}, {"comm_cost", comm}, {"payload_rate", e.payload_rate}};
  if (!e.trigger) j["trigger"] = false;
  if (e.assumed) j["assumed"] = true;
  return j;
}

inline json dump_dag_json(const Dag& dag, const std::optional<Platform>& platform = std::nullopt) {
  json nodes = json::array();
  for (const auto& n : dag.nodes) nodes.push_back(to_json(n));
  json edges = json::array();
  for (const auto& e : dag.edges) edges.push_back(to_json(e));
  return {{"version", kDagSchemaVersion},
          {"platform", platform ? to_json(*platform) : json(nullptr)},
          {"nodes", nodes},
          {"edges", edges}};
}

/// Serialize to the `.dag` text form; keys sorted, two-space indent.
inline std::string dump_dag(const Dag& dag, const std::optional<Platform>& platform = std::nullopt) {
  return dump_dag_json(dag, platform).dump(2) + "\n";
}

inline DagDocument load_document_json(const json& j) {
  using namespace detail;
  only_keys(j, "", {"version", "platform", "nodes", "edges"});
  const auto& ver = need(j, "", "version");
  if (!ver.is_number_integer()) throw ParseError("version", "expected an integer");
  if (ver.get<int>() != kDagSchemaVersion)
    throw ParseError("version", "schema version mismatch: got " + std::to_string(ver.get<int>()) + ", expected " +
                                    std::to_string(kDagSchemaVersion));
  DagDocument doc;
  if (j.contains("platform") && !j["platform"].is_null()) doc.platform = platform_from_json(j["platform"]);

  const auto& nodes = need(j, "", "nodes");
  if (!nodes.is_array()) throw ParseError("nodes", "expected an array");
  if (nodes.empty()) throw ParseError("nodes", "no nodes");
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    std::string p = "nodes[" + std::to_string(i) + "]";
    const auto& jn = nodes[i];
    only_keys(jn, p, {"id", "name", "category", "costs", "eligibility", "period_ms", "deadline_ms", "threads"});
    TaskNode n;
    n.id = get_string(need(jn, p, "id"), p + ".id");
    n.name = jn.contains("name") ? get_string(jn["name"], p + ".name") : n.id;
    auto cat = parse_category(get_string(need(jn, p, "category"), p + ".category"));
    if (!cat) throw ParseError(p + ".category", "unknown category");
    n.category = *cat;
    const auto& costs = need(jn, p, "costs");
    if (!costs.is_object()) throw ParseError(p + ".costs", "expected an object");
    for (const auto& [k, v] : costs.items()) {
      auto kind = parse_kind(k);
      if (!kind) throw ParseError(p + ".costs." + k, "unknown processor kind");
      n.costs[*kind] = get_number(v, p + ".costs." + k);
    }
    const auto& elig = need(jn, p, "eligibility");
    if (!elig.is_array()) throw ParseError(p + ".eligibility", "expected an array");
    for (std::size_t k = 0; k < elig.size(); ++k) {
      std::string ep = p + ".eligibility[" + std::to_string(k) + "]";
      auto kind = parse_kind(get_string(elig[k], ep));
      if (!kind) throw ParseError(ep, "unknown processor kind");
      n.eligibility.insert(*kind);
    }
    if (jn.contains("period_ms") && !jn["period_ms"].is_null()) n.period_ms = get_number(jn["period_ms"], p + ".period_ms");
    n.deadline_ms = get_number(need(jn, p, "deadline_ms"), p + ".deadline_ms");
    if (jn.contains("threads")) {
      if (!jn["threads"].is_number_integer()) throw ParseError(p + ".threads", "expected an integer");
      n.threads = jn["threads"].get<int>();
    }
    doc.dag.nodes.push_back(std::move(n));
  }

  if (j.contains("edges")) {
    const auto& edges = j["edges"];
    if (!edges.is_array()) throw ParseError("edges", "expected an array");
    for (std::size_t i = 0; i < edges.size(); ++i) {
      std::string p = "edges[" + std::to_string(i) + "]";
      const auto& je = edges[i];
      only_keys(je, p, {"src", "dst", "comm_cost", "payload_rate", "trigger", "assumed"});
      Edge e;
      e.src = get_string(need(je, p, "src"), p + ".src");
      e.dst = get_string(need(je, p, "dst"), p + ".dst");
      if (je.contains("comm_cost")) {
        const auto& cc = je["comm_cost"];
        if (!cc.is_object()) throw ParseError(p + ".comm_cost", "expected an object");
        for (const auto& [k, v] : cc.items()) {
          auto dash = k.find('-');
          auto a = dash == std::string::npos ? std::nullopt : parse_kind(k.substr(0, dash));
          auto b = dash == std::string::npos ? std::nullopt : parse_kind(k.substr(dash + 1));
          if (!a || !b) throw ParseError(p + ".comm_cost." + k, "expected KIND-KIND");
          e.comm_cost[make_pair_key(*a, *b)] = get_number(v, p + ".comm_cost." + k);
        }
      }
      if (je.contains("payload_rate")) e.payload_rate = get_number(je["payload_rate"], p + ".payload_rate");
      if (je.contains("trigger")) {
        if (!je["trigger"].is_boolean()) throw ParseError(p + ".trigger", "expected a boolean");
        e.trigger = je["trigger"].get<bool>();
      }
      if (je.contains("assumed")) {
        if (!je["assumed"].is_boolean()) throw ParseError(p + ".assumed", "expected a boolean");
        e.assumed = je["assumed"].get<bool>();
      }
      doc.dag.edges.push_back(std::move(e));
    }
  }
  return doc;
}

inline DagDocument load_document(std::string_view text) { return load_document_json(detail::parse_json(text)); }

inline Dag load_dag(std::string_view text) { return load_document(text).dag; }

}  // namespace scad
