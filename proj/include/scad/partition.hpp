#pragma once

// Accelerator-fallback partitioning of DNN layer sequences, op
// substitution, and the resulting execution-cost / phase plans.

#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "scad/dag.hpp"

namespace scad {

struct Layer {
  std::string op_kind;
  std::string block;  // owning block name
  std::string params; // free-form summary, carried through untouched
  bool operator==(const Layer&) const = default;
};

struct LayerBlock {
  std::string name;
  std::size_t first = 0;
  std::size_t count = 0;
  bool operator==(const LayerBlock&) const = default;
};

/// Linear layer sequence with optional skip connections (from -> to,
/// both layer indices, from < to).
struct LayerGraph {
  std::string name;
  std::vector<Layer> layers;
  std::vector<LayerBlock> blocks;
  std::vector<std::pair<std::size_t, std::size_t>> skips;
  bool operator==(const LayerGraph&) const = default;
};

struct SupportProfile {
  ProcKind device = ProcKind::DLA;
  ProcKind fallback = ProcKind::GPU;
  std::set<std::string> supported_ops;
  int max_fallback_subgraphs = 8;
  bool count_total_segments = false;  // budget applies to every segment, not only fallbacks

  bool supports(const std::string& op) const { return supported_ops.count(op) != 0; }
};

enum class SegmentDevice : std::uint8_t { Target, Fallback };

struct Segment {
  SegmentDevice device = SegmentDevice::Target;
  std::size_t first = 0;  // layer index
  std::size_t last = 0;   // inclusive
  bool operator==(const Segment&) const = default;
};

struct PartitionPlan {
  std::vector<Segment> segments;
  int fallback_count = 0;
  int unsupported_runs = 0;    // fallback subgraphs needed without the budget
  int fallback_entries = 0;    // target -> fallback switches
  int fallback_exits = 0;      // fallback -> target switches
  bool feasible = true;
  double est_switch_overhead = 0.0;  // transitions x penalty

  int transitions() const { return fallback_entries + fallback_exits; }
};

// ---------------------------------------------------------------------------
// `.lg` text format
// ---------------------------------------------------------------------------

/// Grammar, one directive per line ('#' starts a comment):
///   model <name>
///   block <name>
///   layer <op_kind> [from=<layer index>] [key=value ...]
inline LayerGraph parse_layer_graph(std::string_view text) {
  LayerGraph g;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::istringstream ls(line);
    std::string word;
    if (!(ls >> word)) continue;
    const std::string where = std::to_string(lineno) + ":1";
    if (word == "model") {
      ls >> g.name;
    } else if (word == "block") {
      std::string name;
      if (!(ls >> name)) throw ParseError(where, "block needs a name");
      g.blocks.push_back({name, g.layers.size(), 0});
    } else if (word == "layer") {
      Layer l;
      if (!(ls >> l.op_kind)) throw ParseError(where, "layer needs an op kind");
      if (g.blocks.empty()) throw ParseError(where, "layer outside of a block");
      l.block = g.blocks.back().name;
      std::string tok, params;
      while (ls >> tok) {
        if (tok.rfind("from=", 0) == 0) {
          long from = 0;
          try {
            from = std::stol(tok.substr(5));
          } catch (const std::exception&) {
            throw ParseError(where, "bad skip source '" + tok + "'");
          }
          if (from < 0 || static_cast<std::size_t>(from) >= g.layers.size())
            throw ParseError(where, "skip source must name an earlier layer");
          g.skips.emplace_back(static_cast<std::size_t>(from), g.layers.size());
        }
        params += (params.empty() ? "" : " ") + tok;
      }
      l.params = params;
      g.layers.push_back(l);
      ++g.blocks.back().count;
    } else {
      throw ParseError(where, "unknown directive '" + word + "'");
    }
  }
  return g;
}

inline std::string dump_layer_graph(const LayerGraph& g) {
  std::ostringstream os;
  if (!g.name.empty()) os << "model " << g.name << "\n";
  for (const auto& b : g.blocks) {
    os << "block " << b.name << "\n";
    for (std::size_t i = b.first; i < b.first + b.count; ++i) {
      os << "layer " << g.layers[i].op_kind;
      if (!g.layers[i].params.empty()) os << " " << g.layers[i].params;
      os << "\n";
    }
  }
  return os.str();
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot open " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline LayerGraph load_layer_graph(const std::string& path) { return parse_layer_graph(read_text_file(path)); }

/// `.prof`: {"device": "DLA", "fallback": "GPU", "supported_ops": [...],
/// "max_fallback_subgraphs": 8, "count_total_segments": false}
inline SupportProfile support_profile_from_json(const json& j) {
  using namespace detail;
  only_keys(j, "", {"device", "fallback", "supported_ops", "max_fallback_subgraphs", "count_total_segments"});
  SupportProfile p;
  auto dev = parse_kind(get_string(need(j, "", "device"), "device"));
  if (!dev) throw ParseError("device", "unknown processor kind");
  p.device = *dev;
  if (j.contains("fallback")) {
    auto fb = parse_kind(get_string(j["fallback"], "fallback"));
    if (!fb) throw ParseError("fallback", "unknown processor kind");
    p.fallback = *fb;
  }
  const auto& ops = need(j, "", "supported_ops");
  if (!ops.is_array()) throw ParseError("supported_ops", "expected an array");
  for (std::size_t i = 0; i < ops.size(); ++i)
    p.supported_ops.insert(get_string(ops[i], "supported_ops[" + std::to_string(i) + "]"));
  if (j.contains("max_fallback_subgraphs")) {
    if (!j["max_fallback_subgraphs"].is_number_integer() || j["max_fallback_subgraphs"].get<int>() < 0)
      throw ParseError("max_fallback_subgraphs", "expected a non-negative integer");
    p.max_fallback_subgraphs = j["max_fallback_subgraphs"].get<int>();
  }
  if (j.contains("count_total_segments")) p.count_total_segments = j["count_total_segments"].get<bool>();
  return p;
}

inline SupportProfile load_support_profile(const std::string& path) {
  return support_profile_from_json(detail::parse_json(read_text_file(path)));
}

// ---------------------------------------------------------------------------
// partitioning
// ---------------------------------------------------------------------------

namespace detail {

inline void count_transitions(PartitionPlan& plan) {
  plan.fallback_count = plan.fallback_entries = plan.fallback_exits = 0;
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    if (plan.segments[i].device != SegmentDevice::Fallback) continue;
    ++plan.fallback_count;
    if (i > 0) ++plan.fallback_entries;
    if (i + 1 < plan.segments.size()) ++plan.fallback_exits;
  }
}

}  // namespace detail

/// Maximal supported runs become target segments and unsupported runs
/// fallback segments. When the budget is exceeded, the segment that
/// would use the last allowed subgraph runs on the fallback device to
/// the end of the model.
inline PartitionPlan partition(const LayerGraph& g, const SupportProfile& prof, double switch_penalty_ms = 1.0) {
  if (g.layers.empty()) throw StructuralError("layer graph " + g.name + " has no layers");
  std::vector<Segment> runs;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    auto dev = prof.supports(g.layers[i].op_kind) ? SegmentDevice::Target : SegmentDevice::Fallback;
    if (!runs.empty() && runs.back().device == dev)
      runs.back().last = i;
    else
      runs.push_back({dev, i, i});
  }

  PartitionPlan plan;
  for (const auto& r : runs) plan.unsupported_runs += r.device == SegmentDevice::Fallback;
  const int budget = prof.max_fallback_subgraphs;
  const int needed = prof.count_total_segments ? static_cast<int>(runs.size()) : plan.unsupported_runs;
  plan.feasible = plan.unsupported_runs == 0 || needed <= budget;

  if (plan.feasible) {
    plan.segments = runs;
  } else if (budget == 0) {
    plan.segments = {{SegmentDevice::Fallback, 0, g.layers.size() - 1}};
  } else {
    int used = 0;
    for (const auto& r : runs) {
      const bool counts = prof.count_total_segments || r.device == SegmentDevice::Fallback;
      if (counts && used + 1 == budget) {
        plan.segments.push_back({SegmentDevice::Fallback, r.first, g.layers.size() - 1});
        break;
      }
      plan.segments.push_back(r);
      used += counts;
    }
  }
  detail::count_transitions(plan);
  // A zero budget leaves no engine to fall back from: the whole model
  // runs on the fallback device and no subgraph is charged.
  if (!plan.feasible && budget == 0) plan.fallback_count = 0;
  plan.est_switch_overhead = plan.transitions() * switch_penalty_ms;
  return plan;
}

// ---------------------------------------------------------------------------
// substitution
// ---------------------------------------------------------------------------

struct SubstitutionRule {
  std::string from_op;
  std::string to_op;
  std::string note;  // documentation only, e.g. reported accuracy impact
};

struct SubstitutionResult {
  LayerGraph graph;
  std::vector<std::string> warnings;
  int replaced = 0;
};

inline SubstitutionRule leaky_relu_to_relu() {
  return {"leaky_relu", "relu", "activation swap; accuracy impact reported separately, not computed"};
}

/// Replaces op kinds only; layer count, blocks and skips are untouched.
inline SubstitutionResult substitute(const LayerGraph& g, const std::vector<SubstitutionRule>& rules,
                                     const SupportProfile* target = nullptr) {
  SubstitutionResult r{g, {}, 0};
  for (const auto& rule : rules) {
    if (target && !target->supports(rule.to_op))
      r.warnings.push_back("rule " + rule.from_op + "->" + rule.to_op + ": '" + rule.to_op + "' is not supported on " +
                           std::string(to_string(target->device)));
    for (auto& l : r.graph.layers)
      if (l.op_kind == rule.from_op) {
        l.op_kind = rule.to_op;
        ++r.replaced;
      }
  }
  return r;
}

// ---------------------------------------------------------------------------
// costs
// ---------------------------------------------------------------------------

/// Σ segment costs + transitions x penalty.
inline double derive_costs(const PartitionPlan& plan, const std::vector<double>& per_segment_costs,
                           double switch_penalty_ms) {
  if (per_segment_costs.size() != plan.segments.size())
    throw Error("segment costs cover " + std::to_string(per_segment_costs.size()) + " of " +
                std::to_string(plan.segments.size()) + " segments");
  double sum = 0.0;
  for (double c : per_segment_costs) sum += c;
  return sum + plan.transitions() * switch_penalty_ms;
}

/// Relative compute weight of an op kind.
inline double op_weight(const std::string& op) {
  if (op == "conv") return 1.0;
  if (op == "maxpool" || op == "upsample") return 0.1;
  return 0.02;
}

/// Per-segment costs from whole-model times on each device, splitting
/// by op weight.
inline std::vector<double> segment_costs(const LayerGraph& g, const PartitionPlan& plan, double target_ms,
                                         double fallback_ms) {
  double total = 0.0;
  for (const auto& l : g.layers) total += op_weight(l.op_kind);
  std::vector<double> out;
  for (const auto& s : plan.segments) {
    double w = 0.0;
    for (std::size_t i = s.first; i <= s.last; ++i) w += op_weight(g.layers[i].op_kind);
    out.push_back((s.device == SegmentDevice::Target ? target_ms : fallback_ms) * w / total);
  }
  return out;
}

/// One step of an accelerator execution plan: `ms` of work on `device`,
/// preceded by `switch_ms` of switching overhead charged on that device.
struct Phase {
  ProcKind device = ProcKind::GPU;
  double ms = 0.0;
  double switch_ms = 0.0;
  bool operator==(const Phase&) const = default;
};

inline std::vector<Phase> phase_plan(const LayerGraph& g, const PartitionPlan& plan, const SupportProfile& prof,
                                     double target_ms, double fallback_ms, double switch_penalty_ms) {
  auto costs = segment_costs(g, plan, target_ms, fallback_ms);
  std::vector<Phase> out;
  for (std::size_t i = 0; i < plan.segments.size(); ++i) {
    Phase p;
    p.device = plan.segments[i].device == SegmentDevice::Target ? prof.device : prof.fallback;
    p.ms = costs[i];
    if (i > 0) p.switch_ms += switch_penalty_ms / 2.0;
    if (i + 1 < plan.segments.size()) p.switch_ms += switch_penalty_ms / 2.0;
    out.push_back(p);
  }
  return out;
}

inline json to_json(const PartitionPlan& plan, const LayerGraph& g) {
  json segs = json::array();
  for (const auto& s : plan.segments)
    segs.push_back({{"device", s.device == SegmentDevice::Target ? "target" : "fallback"},
                    {"first", s.first},
                    {"last", s.last},
                    {"first_block", g.layers[s.first].block},
                    {"last_block", g.layers[s.last].block}});
  return {{"model", g.name},
          {"layers", g.layers.size()},
          {"blocks", g.blocks.size()},
          {"segments", segs},
          {"fallback_count", plan.fallback_count},
          {"unsupported_runs", plan.unsupported_runs},
          {"fallback_entries", plan.fallback_entries},
          {"fallback_exits", plan.fallback_exits},
          {"feasible", plan.feasible},
          {"est_switch_overhead", plan.est_switch_overhead}};
}

}  // namespace scad
