#include <CLI11.hpp>

#include <fstream>
#include <iostream>

#include "scad/experiment.hpp"

using namespace scad;

namespace {

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path);
  out << text;
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

Stage stage_arg(const std::string& s) {
  auto st = parse_stage(s);
  if (!st) throw Error("unknown stage '" + s + "'");
  return *st;
}

Policy policy_arg(const std::string& s) {
  auto p = parse_policy(s);
  if (!p) throw Error("unknown policy '" + s + "' (TIME_SHARING, STATIC_RT, JIT_RT)");
  return *p;
}

DagDocument load_dag_file(const std::string& path) { return load_document(read_text_file(path)); }

Platform platform_for(const DagDocument& doc, const std::string& platform_path) {
  if (!platform_path.empty()) return load_platform_file(platform_path);
  return doc.platform.value_or(default_platform());
}

/// One report row for a standalone simulation.
json sim_run_json(const std::string& label, const Dag& dag, const SimConfig& cfg, const SimResult& r) {
  auto misses = to_json(r.misses);
  double worst = 0.0;
  for (const auto& m : r.misses.modules) worst = std::max(worst, m.miss_rate);
  return {{"app", label},
          {"stage", to_string(cfg.policy.policy)},
          {"policy", to_string(cfg.policy.policy)},
          {"nodes", dag.nodes.size()},
          {"modules", misses["modules"]},
          {"starved", misses["starved"]},
          {"overall_miss_rate", misses["overall_miss_rate"]},
          {"miss_rate", detail::finite_or_null(worst)},
          {"energy", to_json(r.energy)}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"scad: DAG scheduling and simulation for multi-accelerator driving workloads"};
  app.require_subcommand(1);
  int jobs = 1;
  app.add_option("--jobs", jobs, "Concurrent candidate evaluations")->check(CLI::PositiveNumber);

  std::string profile_dir = default_profile_dir().string();
  std::string model_dir = "fixtures";

  // gen
  auto* gen = app.add_subcommand("gen", "Generate an application DAG");
  std::string gen_app, gen_out, gen_stage = "linux-ts", gen_profile, gen_platform;
  bool gen_pad = false;
  gen->add_option("--app", gen_app, "Standard application (ADy288 ... ADs608)")->required();
  gen->add_option("--stage", gen_stage, "Stage selecting the profile and DLA mode");
  gen->add_option("--profile", gen_profile, "Cost profile name (default: the stage's segment profile)");
  gen->add_option("--profile-dir", profile_dir);
  gen->add_option("--model-dir", model_dir, "Directory with detector .lg files and dla.prof");
  gen->add_option("--platform", gen_platform, "Platform document to embed");
  gen->add_flag("--pad", gen_pad, "Add the ten pass-through backbone nodes");
  gen->add_option("-o,--output", gen_out, "Output .dag (default: stdout)");

  // schedule
  auto* sch = app.add_subcommand("schedule", "Schedule a DAG for one stage");
  std::string sch_stage = "jit", sch_dag, sch_platform, sch_out, sch_profile;
  double sch_horizon = 10000.0;
  std::uint64_t sch_seed = 7;
  std::size_t sch_bound = 10000;
  bool sch_no_sym = false, sch_gantt = false;
  int sch_iters = 5;
  sch->add_option("--stage", sch_stage);
  sch->add_option("dag", sch_dag)->required()->check(CLI::ExistingFile);
  sch->add_option("platform", sch_platform, "Platform document (default: embedded or built-in)")
      ->check(CLI::ExistingFile);
  sch->add_option("--profile", sch_profile, "Profile supplying simulator parameters for candidate runs");
  sch->add_option("--profile-dir", profile_dir);
  sch->add_option("--horizon-ms", sch_horizon, "Simulated time per candidate");
  sch->add_option("--seed", sch_seed);
  sch->add_option("--bound", sch_bound, "Maximum enumerated assignments");
  sch->add_option("--max-iters", sch_iters);
  sch->add_flag("--no-symmetry", sch_no_sym, "Enumerate the full cartesian product");
  sch->add_flag("--gantt", sch_gantt, "Print an ASCII Gantt chart");
  sch->add_option("-o,--output", sch_out, "Output .sched (candidates go to <out>.cands.json)");

  // sim
  auto* sim = app.add_subcommand("sim", "Simulate a scheduled DAG");
  std::string sim_dag, sim_platform, sim_sched, sim_policy = "JIT_RT", sim_trace, sim_out, sim_profile;
  double sim_horizon = 60000.0;
  std::uint64_t sim_seed = 7;
  sim->add_option("dag", sim_dag)->required()->check(CLI::ExistingFile);
  sim->add_option("platform", sim_platform)->check(CLI::ExistingFile);
  sim->add_option("--schedule", sim_sched, "Schedule file (default: HEFT)")->check(CLI::ExistingFile);
  sim->add_option("--policy", sim_policy);
  sim->add_option("--horizon-ms", sim_horizon);
  sim->add_option("--seed", sim_seed);
  sim->add_option("--profile", sim_profile, "Profile supplying simulator parameters");
  sim->add_option("--profile-dir", profile_dir);
  sim->add_option("--trace", sim_trace, "Write the event trace as NDJSON");
  sim->add_option("-o,--output", sim_out, "Write the JSON report");

  // run
  auto* run = app.add_subcommand("run", "Run an experiment plan");
  std::string run_plan;
  run->add_option("--plan", run_plan)->required()->check(CLI::ExistingFile);

  // partition
  auto* part = app.add_subcommand("partition", "Partition a layer graph for the DLA");
  std::string part_model, part_prof;
  bool part_sub = false;
  double part_penalty = 1.0;
  part->add_option("model", part_model)->required()->check(CLI::ExistingFile);
  part->add_option("--profile", part_prof, "Operator support profile")->required()->check(CLI::ExistingFile);
  part->add_flag("--substitute", part_sub, "Apply LeakyReLU -> ReLU before partitioning");
  part->add_option("--penalty", part_penalty, "Per-transition switch penalty (ms)");

  // diff
  auto* dif = app.add_subcommand("diff", "Per-module deltas between two reports");
  std::string diff_a, diff_b, diff_out;
  dif->add_option("a", diff_a)->required()->check(CLI::ExistingFile);
  dif->add_option("b", diff_b)->required()->check(CLI::ExistingFile);
  dif->add_option("-o,--output", diff_out, "Write the JSON diff");

  // calibrate
  auto* cal = app.add_subcommand("calibrate", "Fit profile divisors to module times by simulation");
  std::vector<std::string> cal_apps{"all"};
  std::vector<int> cal_segments;
  double cal_horizon = 20000.0, cal_tol = 0.02;
  int cal_rounds = 16;
  cal->add_option("--app", cal_apps);
  cal->add_option("--segment", cal_segments)->check(CLI::Range(1, 6));
  cal->add_option("--profile-dir", profile_dir);
  cal->add_option("--model-dir", model_dir);
  cal->add_option("--horizon-ms", cal_horizon);
  cal->add_option("--rounds", cal_rounds);
  cal->add_option("--tol", cal_tol);

  CLI11_PARSE(app, argc, argv);

  try {
    StageOptions opts;
    opts.profile_dir = profile_dir;
    opts.model_dir = model_dir;
    opts.search.jobs = jobs;

    if (*gen) {
      const auto stage = stage_arg(gen_stage);
      if (!gen_platform.empty()) opts.platform = load_platform_file(gen_platform);
      opts.pad_backbone = gen_pad;
      std::optional<CostProfile> prof;
      if (!gen_profile.empty()) prof = load_profile(gen_profile, opts.profile_dir);
      auto r = prepare_stage(gen_app, stage, opts, prof ? &*prof : nullptr);
      auto text = dump_dag(r.dag, opts.platform);
      if (gen_out.empty()) std::cout << text;
      else write_file(gen_out, text);
      return 0;
    }

    if (*sch) {
      const auto stage = stage_arg(sch_stage);
      auto doc = load_dag_file(sch_dag);
      auto pl = platform_for(doc, sch_platform);
      SimConfig cfg = sch_profile.empty() ? SimConfig{} : load_profile(sch_profile, opts.profile_dir).sim;
      cfg.policy.policy = stage_policy(stage);
      cfg.seed = sch_seed;
      opts.search.candidate_horizon_ms = sch_horizon;
      opts.search.bound = sch_bound;
      opts.search.symmetry = !sch_no_sym;
      Schedule s;
      std::optional<json> cands;
      if (stage <= Stage::jit) {
        s = schedule_heft(doc.dag, pl);
      } else if (stage == Stage::jit_accel_custom_iter) {
        auto it = iterate_corun_schedule(doc.dag, pl, cfg, sch_iters, opts.search);
        s = it.best.schedule;
        cands = candidates_json(doc.dag, pl, it.initial);
      } else {
        auto r = schedule_by_instantiation(doc.dag, pl, cfg, opts.search);
        s = r.winner().schedule;
        cands = candidates_json(doc.dag, pl, r);
      }
      const auto text = dump(schedule_to_json(doc.dag, pl, s));
      if (sch_out.empty()) {
        std::cout << text;
      } else {
        write_file(sch_out, text);
        if (cands) {
          auto base = std::filesystem::path(sch_out);
          write_file(base.replace_extension(".cands.json").string(), dump(*cands));
        }
      }
      if (sch_gantt) std::cerr << render_gantt(doc.dag, pl, s);
      return 0;
    }

    if (*sim) {
      auto doc = load_dag_file(sim_dag);
      auto pl = platform_for(doc, sim_platform);
      SimConfig cfg = sim_profile.empty() ? SimConfig{} : load_profile(sim_profile, opts.profile_dir).sim;
      cfg.policy.policy = policy_arg(sim_policy);
      cfg.horizon_ms = sim_horizon;
      cfg.seed = sim_seed;
      cfg.record_trace = !sim_trace.empty();
      auto s = sim_sched.empty() ? schedule_heft(doc.dag, pl)
                                 : schedule_from_json(doc.dag, pl, detail::parse_json(read_text_file(sim_sched)));
      auto r = simulate(doc.dag, pl, s, cfg);
      if (!sim_trace.empty()) write_file(sim_trace, trace_ndjson(doc.dag, pl, r.trace));
      json report = {{"version", 1}, {"runs", {sim_run_json(std::filesystem::path(sim_dag).stem().string(), doc.dag, cfg, r)}}};
      if (!sim_out.empty()) write_file(sim_out, dump(report));
      std::cout << report_table(report);
      return 0;
    }

    if (*run) {
      auto plan = load_plan(run_plan);
      if (app.count("--jobs")) plan.jobs = jobs;
      auto r = run_experiment(plan);
      auto base = std::filesystem::path(run_plan).replace_extension("");
      write_file(base.string() + ".report.json", dump(r.doc));
      write_file(base.string() + ".report.txt", r.table);
      std::cout << r.table;
      return 0;
    }

    if (*part) {
      auto g = load_layer_graph(part_model);
      const auto prof = load_support_profile(part_prof);
      if (part_sub) {
        auto sub = substitute(g, {leaky_relu_to_relu()}, &prof);
        for (const auto& w : sub.warnings) std::cerr << "warning: " << w << "\n";
        g = std::move(sub.graph);
      }
      std::cout << dump(to_json(partition(g, prof, part_penalty), g));
      return 0;
    }

    if (*dif) {
      auto d = diff_reports(detail::parse_json(read_text_file(diff_a)), detail::parse_json(read_text_file(diff_b)));
      if (!diff_out.empty()) write_file(diff_out, dump(d));
      std::cout << diff_table(d);
      return 0;
    }

    if (*cal) {
      std::vector<std::string> apps = cal_apps;
      if (apps.size() == 1 && apps[0] == "all") apps = standard_apps();
      if (cal_segments.empty()) cal_segments = {1, 2, 3, 4, 5, 6};
      opts.horizon_ms = cal_horizon;
      for (int seg : cal_segments)
        for (const auto& a : apps) {
          const auto name = "segment" + std::to_string(seg) + "-" + a;
          auto p = load_profile(name, opts.profile_dir);
          CalibrationLog log;
          p = calibrate_profile(p, opts, cal_rounds, cal_tol, &log);
          write_file((opts.profile_dir / (name + ".json")).string(), dump(to_json(p)));
          std::cout << name << (log.converged ? " converged" : " not converged") << " after "
                    << log.measured.size() << " rounds:";
          if (!log.measured.empty())
            for (const auto& [c, v] : log.measured[log.chosen])
              std::cout << " " << to_string(c) << "=" << detail::fmt(v) << "/" << detail::fmt(*p.table_ms.at(c));
          std::cout << "\n";
        }
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
