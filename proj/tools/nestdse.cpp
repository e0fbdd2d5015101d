// Command-line front end: evaluate mappings, validate the analytic model
// against the loop-nest simulator, search the design space, sweep PE array
// sizes, and enumerate dataflows/blockings.
//
// Exit codes: 0 success, 1 usage or parse error, 2 validation failure,
// 3 infeasible search.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "CLI11.hpp"
#include "nest/costmodel.hpp"
#include "nest/optimizer.hpp"
#include "nest/simoracle.hpp"
#include "nest/workload.hpp"

namespace fs = std::filesystem;
using namespace nest;

namespace {

constexpr int kExitOk = 0, kExitUsage = 1, kExitValidation = 2,
              kExitInfeasible = 3;

Dataflow parse_dataflow_arg(const std::string& arg) {
  auto bar = arg.find('|');
  std::string vert = bar == std::string::npos ? arg : arg.substr(0, bar);
  std::string horiz = bar == std::string::npos ? "" : arg.substr(bar + 1);
  std::string text = "dataflow vert=" + (vert.empty() ? "-" : vert) +
                     " horiz=" + (horiz.empty() ? "-" : horiz) + "\n";
  return parse_schedule(text).dataflow;
}

int check_arch(const ArchSpec& arch) {
  auto v = validate_arch(arch);
  if (v.empty()) return kExitOk;
  for (const auto& x : v)
    std::cerr << "arch violation: "
              << (x.level >= 0 ? "level " + std::to_string(x.level) + ": " : "")
              << x.what << '\n';
  return kExitValidation;
}

std::vector<Dataflow> dataflow_candidates(const LayerShape& layer,
                                          const ArchSpec& arch,
                                          const std::string& fixed,
                                          bool replication) {
  if (!fixed.empty()) {
    Dataflow df = parse_dataflow_arg(fixed);
    bool any_factor = false;
    for (const auto* side : {&df.vertical, &df.horizontal})
      for (const auto& u : *side)
        if (u.factor != 1) any_factor = true;
    if (!any_factor) df = replication_factors(df, layer, arch.rows, arch.cols);
    return {df};
  }
  return enumerate_dataflows(layer, arch.rows, arch.cols, replication);
}

struct EvalOptions {
  std::string network_file, arch_file, schedule_file, schedule_dir;
  std::string dataflow;
  bool auto_block = false;
  bool flat = false;
  bool no_replication = false;
  std::string objective = "energy";
  int64_t budget = 500'000'000;
  double min_utilization = 0.0;
};

int cmd_evaluate(const EvalOptions& o) {
  Network net = load_network(o.network_file);
  ArchSpec arch = load_arch(o.arch_file);
  if (int rc = check_arch(arch); rc != kExitOk) return rc;
  Objective obj = o.objective == "edp" ? Objective::EnergyDelayProduct
                                       : Objective::Energy;

  std::vector<CostReport> reports;
  std::vector<std::pair<std::string, Schedule>> schedules;
  for (const auto& [name, layer] : net.layers) {
    Schedule s;
    if (o.auto_block) {
      auto dfs = dataflow_candidates(layer, arch, o.dataflow,
                                     !o.no_replication);
      auto best = exhaustive_search(layer, arch, dfs, obj, o.budget,
                                    o.min_utilization);
      if (!best) {
        std::cerr << "layer " << name
                  << ": no valid blocking fits the hierarchy\n";
        return kExitInfeasible;
      }
      s = best->schedule;
    } else {
      std::string path = o.schedule_file;
      if (!o.schedule_dir.empty())
        path = (fs::path(o.schedule_dir) / (name + ".sched")).string();
      if (path.empty()) {
        std::cerr << "evaluate needs --schedule, --schedules or --auto-block\n";
        return kExitUsage;
      }
      s = load_schedule(path);
    }
    auto viol = validate_schedule(layer, s, arch);
    if (!viol.empty()) {
      std::cerr << "layer " << name << ": schedule does not validate:\n";
      for (const auto& v : viol) std::cerr << "  " << to_string(v) << '\n';
      return kExitValidation;
    }
    reports.push_back(energy(layer, s, arch));
    schedules.emplace_back(name, s);
  }

  double total = 0.0;
  int64_t cycles = 0;
  for (size_t i = 0; i < reports.size(); ++i) {
    const auto& name = net.layers[i].first;
    if (o.flat) {
      std::cout << report_flat(reports[i], arch, name);
      std::cout << name << ".schedule=" << canonical_key(schedules[i].second)
                << '\n';
    } else {
      std::cout << report_table(reports[i], arch, "layer " + name) << '\n';
    }
    total += reports[i].total_energy;
    cycles += reports[i].runtime_cycles;
  }
  auto [agg, elided] = aggregate_network_energy(net, arch, reports);
  if (o.flat) {
    std::cout << "network.total.energy_pj=" << std::setprecision(15) << total
              << "\n";
    std::cout << "network.onchip.energy_pj=" << agg << "\n";
    std::cout << "network.elided.energy_pj=" << elided << "\n";
    std::cout << "network.runtime.cycles=" << cycles << "\n";
  } else {
    std::cout << "network total energy: " << total << " pJ";
    if (elided > 0)
      std::cout << " (" << agg << " pJ with layer-to-layer reuse, " << elided
                << " pJ elided)";
    std::cout << "\nnetwork runtime: " << cycles << " cycles\n";
  }
  return kExitOk;
}

LayerShape shrink_for_sim(const LayerShape& l, bool& shrunk) {
  LayerShape s = l;
  auto clamp = [&](int64_t& v, int64_t cap) {
    if (v > cap) {
      v = cap;
      shrunk = true;
    }
  };
  clamp(s.b, 4);
  clamp(s.k, 6);
  clamp(s.c, 6);
  clamp(s.x, 6);
  clamp(s.y, 6);
  clamp(s.fx, 3);
  clamp(s.fy, 3);
  return s;
}

// Random valid schedule for a layer on an arch; retries until it fits.
Schedule random_schedule(const LayerShape& layer, const ArchSpec& arch,
                         std::mt19937_64& rng) {
  auto storage = arch.storage_levels();
  int M = (int)storage.size();
  auto dfs = enumerate_dataflows(layer, arch.rows, arch.cols, true);
  for (int attempt = 0; attempt < 200; ++attempt) {
    Schedule s;
    if (!dfs.empty() && (rng() % 4) != 0)
      s.dataflow = dfs[rng() % dfs.size()];
    std::array<int64_t, kNumLoops> spatial{1, 1, 1, 1, 1, 1, 1};
    for (const auto* side : {&s.dataflow.vertical, &s.dataflow.horizontal})
      for (const auto& u : *side) spatial[(int)u.loop] *= u.factor;
    s.levels.assign(M, BlockingLevel{});
    for (int l = 0; l < kNumLoops; ++l) {
      int64_t rem = (layer.bound((LoopId)l) + spatial[l] - 1) / spatial[l];
      for (int i = 0; i < M - 1; ++i) {
        std::vector<int64_t> divs;
        for (int64_t d = 1; d <= rem; ++d)
          if (rem % d == 0) divs.push_back(d);
        int64_t pick = divs[rng() % divs.size()];
        s.levels[i].factors[l] = pick;
        rem /= pick;
      }
      s.levels[M - 1].factors[l] = rem;
    }
    for (int i = 0; i < M; ++i) {
      auto ord = kAllLoops;
      std::shuffle(ord.begin(), ord.end(), rng);
      s.levels[i].order = ord;
    }
    if (validate_schedule(layer, s, arch).empty()) return s;
  }
  throw std::runtime_error("could not draw a valid random schedule");
}

int cmd_validate(const std::string& network_file, const std::string& arch_file,
                 int trials, uint64_t seed, bool flat) {
  Network net = load_network(network_file);
  ArchSpec arch = load_arch(arch_file);
  if (int rc = check_arch(arch); rc != kExitOk) return rc;

  int64_t total_trials = 0;
  for (const auto& [name, layer0] : net.layers) {
    bool shrunk = false;
    LayerShape layer = shrink_for_sim(layer0, shrunk);
    if (shrunk)
      std::cout << "layer " << name
                << ": bounds shrunk to fit the simulation cap\n";
    std::mt19937_64 rng(seed ^ std::hash<std::string>{}(name));
    auto input = make_inputs(layer, seed);
    auto weights = make_weights(layer, seed + 1);
    auto want = reference_conv(layer, input, weights);
    for (int tr = 0; tr < trials; ++tr) {
      Schedule s = random_schedule(layer, arch, rng);
      AccessCounts model = access_counts(layer, s, arch);
      SimResult sim = execute_scheduled(layer, s, arch, input, weights);
      ++total_trials;
      if (sim.output != want) {
        std::cerr << "layer " << name << " trial " << tr
                  << ": functional mismatch against the plain convolution\n"
                  << to_text(s);
        return kExitValidation;
      }
      if (!(model == sim.counts)) {
        for (size_t i = 0; i < model.levels.size(); ++i)
          for (int t = 0; t < 3; ++t) {
            const auto& a = model.levels[i][t];
            const auto& b = sim.counts.levels[i][t];
            if (!(a == b)) {
              std::cerr << "layer " << name << " trial " << tr
                        << ": counts diverge at level " << i << " tensor "
                        << to_string((Tensor)t) << ": model " << a.reads << "r/"
                        << a.writes << "w vs simulated " << b.reads << "r/"
                        << b.writes << "w\n"
                        << to_text(s);
              return kExitValidation;
            }
          }
        std::cerr << "layer " << name << " trial " << tr
                  << ": inter-PE hop counts diverge: model "
                  << model.interpe_hops << " vs simulated "
                  << sim.counts.interpe_hops << "\n"
                  << to_text(s);
        return kExitValidation;
      }
    }
  }
  if (flat) {
    std::cout << "validate.trials=" << total_trials << "\n";
    std::cout << "validate.max_deviation=0\n";
  } else {
    std::cout << "all " << total_trials
              << " trials passed; max deviation 0 (exact)\n";
  }
  return kExitOk;
}

void write_design(const DesignPoint& d, const Network& net,
                  const std::string& out_dir, bool flat) {
  fs::create_directories(out_dir);
  save_arch(d.arch, (fs::path(out_dir) / "arch.arch").string());
  for (const auto& [name, s] : d.schedules)
    save_schedule(s, (fs::path(out_dir) / (name + ".sched")).string());
  std::ofstream rep(fs::path(out_dir) / (flat ? "report.flat" : "report.txt"));
  for (size_t i = 0; i < d.reports.size(); ++i) {
    if (flat)
      rep << report_flat(d.reports[i], d.arch, net.layers[i].first);
    else
      rep << report_table(d.reports[i], d.arch,
                          "layer " + net.layers[i].first)
          << '\n';
  }
  rep << (flat ? "network.total.energy_pj=" : "network total energy (pJ): ")
      << std::setprecision(15) << d.total_energy << '\n';
  rep << (flat ? "network.runtime.cycles=" : "network runtime (cycles): ")
      << d.total_runtime << '\n';
}

int cmd_search(const std::string& network_file,
               const std::string& constraints_file, const std::string& out_dir,
               bool flat, int jobs) {
  Network net = load_network(network_file);
  SearchConstraints c = load_constraints(constraints_file);
  if (jobs > 0) c.jobs = jobs;
  SearchOutcome r = pruned_search(net, c);
  if (!r.best) {
    std::cerr << "no feasible design: " << r.no_solution << '\n';
    return kExitInfeasible;
  }
  const DesignPoint& d = *r.best;
  if (!out_dir.empty()) write_design(d, net, out_dir, flat);
  std::cout << (flat ? "search.candidates=" : "candidates evaluated: ")
            << r.candidates_tried << '\n';
  if (flat) {
    std::cout << "search.total.energy_pj=" << std::setprecision(15)
              << d.total_energy << '\n';
    std::cout << "search.runtime.cycles=" << d.total_runtime << '\n';
    std::cout << "search.onchip.bytes=" << d.onchip_bytes << '\n';
  } else {
    std::cout << "best design:\n" << to_text(d.arch);
    std::cout << "total energy: " << d.total_energy << " pJ\n";
    if (d.dram_elided_pj > 0)
      std::cout << "  (layer-to-layer on-chip reuse elided "
                << d.dram_elided_pj << " pJ of DRAM traffic)\n";
    std::cout << "total runtime: " << d.total_runtime << " cycles\n";
  }
  return kExitOk;
}

int cmd_sweep(const std::string& network_file,
              const std::string& constraints_file, const std::string& out_dir,
              bool flat, int jobs) {
  Network net = load_network(network_file);
  SearchConstraints c = load_constraints(constraints_file);
  if (jobs > 0) c.jobs = jobs;
  auto pts = sweep_pe_array(net, c);
  bool any = false;
  for (auto& [dims, outcome] : pts) {
    std::string tag = std::to_string(dims.first) + "x" +
                      std::to_string(dims.second);
    if (!outcome.best) {
      std::cout << (flat ? "sweep." + tag + ".infeasible=1"
                         : tag + ": infeasible: " + outcome.no_solution)
                << '\n';
      continue;
    }
    any = true;
    const DesignPoint& d = *outcome.best;
    if (!out_dir.empty())
      write_design(d, net, (fs::path(out_dir) / tag).string(), flat);
    int64_t rf = 0, rf2 = 0, sram = 0;
    int nrf = 0;
    for (const auto& l : d.arch.levels) {
      if (l.kind == MemKind::RF) (nrf++ ? rf2 : rf) = l.size_bytes;
      if (l.kind == MemKind::SRAM) sram = l.size_bytes;
    }
    if (flat) {
      std::cout << "sweep." << tag << ".rf_bytes=" << rf << '\n';
      if (rf2) std::cout << "sweep." << tag << ".rf2_bytes=" << rf2 << '\n';
      std::cout << "sweep." << tag << ".sram_bytes=" << sram << '\n';
      std::cout << "sweep." << tag << ".energy_pj=" << std::setprecision(15)
                << d.total_energy << '\n';
      std::cout << "sweep." << tag << ".runtime_cycles=" << d.total_runtime
                << '\n';
    } else {
      std::cout << tag << ": rf=" << rf << " B";
      if (rf2) std::cout << " rf2=" << rf2 << " B";
      std::cout << " sram=" << sram << " B energy=" << d.total_energy
                << " pJ runtime=" << d.total_runtime << " cycles\n";
    }
  }
  return any ? kExitOk : kExitInfeasible;
}

int cmd_enumerate(const std::string& network_file, bool dataflows,
                  bool blockings, const std::string& arch_file,
                  bool replication, bool flat, int64_t limit) {
  Network net = load_network(network_file);
  ArchSpec arch;
  if (!arch_file.empty()) {
    arch = load_arch(arch_file);
    if (int rc = check_arch(arch); rc != kExitOk) return rc;
  } else {
    arch.rows = 16;
    arch.cols = 16;
    arch.levels = {{MemKind::DRAM, -1, -1.0}};
  }
  for (const auto& [name, layer] : net.layers) {
    if (dataflows) {
      auto dfs = enumerate_dataflows(layer, arch.rows, arch.cols, replication);
      if (flat) {
        std::cout << name << ".dataflows=" << dfs.size() << '\n';
      } else {
        std::cout << "layer " << name << ": " << dfs.size() << " dataflows\n";
        for (const auto& df : dfs) std::cout << "  " << to_string(df) << '\n';
      }
    }
    if (blockings) {
      if (arch_file.empty()) {
        std::cerr << "--blockings needs an arch file\n";
        return kExitUsage;
      }
      Schedule skel;
      int64_t n = 0;
      enumerate_blockings(layer, skel, arch, [&](const Schedule& s) {
        if (!flat) std::cout << "  " << canonical_key(s) << '\n';
        return ++n < limit;
      });
      if (flat)
        std::cout << name << ".blockings=" << n << '\n';
      else
        std::cout << "layer " << name << ": " << n << " blockings"
                  << (n >= limit ? " (limit reached)" : "") << '\n';
    }
  }
  return kExitOk;
}

int cmd_report(const std::string& flat_file) {
  std::ifstream f(flat_file);
  if (!f) {
    std::cerr << "cannot open " << flat_file << '\n';
    return kExitUsage;
  }
  std::string line;
  while (std::getline(f, line)) {
    auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::cout << std::left << std::setw(42) << line.substr(0, eq)
              << line.substr(eq + 1) << '\n';
  }
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dense DNN accelerator design-space exploration"};
  app.require_subcommand(1);

  EvalOptions eo;
  auto* ev = app.add_subcommand("evaluate", "Cost a network on an arch");
  ev->add_option("network", eo.network_file)->required();
  ev->add_option("arch", eo.arch_file)->required();
  ev->add_option("--schedule", eo.schedule_file,
                 "schedule file (single-layer networks)");
  ev->add_option("--schedules", eo.schedule_dir,
                 "directory of <layer>.sched files");
  ev->add_flag("--auto-block", eo.auto_block,
               "search the best blocking per layer");
  ev->add_option("--dataflow", eo.dataflow, "fix the dataflow, e.g. C|K");
  ev->add_flag("--no-replication", eo.no_replication);
  ev->add_option("--objective", eo.objective)
      ->check(CLI::IsMember({"energy", "edp"}));
  ev->add_option("--budget", eo.budget);
  ev->add_option("--min-utilization", eo.min_utilization);
  ev->add_flag("--flat", eo.flat, "machine-readable key=value output");

  std::string v_net, v_arch;
  int v_trials = 20;
  uint64_t v_seed = 1;
  bool v_flat = false;
  auto* va = app.add_subcommand("validate",
                                "Check the model against the simulator");
  va->add_option("network", v_net)->required();
  va->add_option("arch", v_arch)->required();
  va->add_option("--trials", v_trials);
  va->add_option("--seed", v_seed);
  va->add_flag("--flat", v_flat);

  std::string s_net, s_cons, s_out;
  bool s_flat = false;
  int s_jobs = 0;
  auto* se = app.add_subcommand("search", "Pruned design-space search");
  se->add_option("network", s_net)->required();
  se->add_option("constraints", s_cons)->required();
  se->add_option("--out", s_out, "directory for arch/schedule/report files");
  se->add_flag("--flat", s_flat);
  se->add_option("--jobs", s_jobs);

  std::string w_net, w_cons, w_out;
  bool w_flat = false;
  int w_jobs = 0;
  auto* sw = app.add_subcommand("sweep", "pruned_search per PE-array size");
  sw->add_option("network", w_net)->required();
  sw->add_option("constraints", w_cons)->required();
  sw->add_option("--out", w_out);
  sw->add_flag("--flat", w_flat);
  sw->add_option("--jobs", w_jobs);

  std::string e_net, e_arch;
  bool e_df = false, e_blk = false, e_repl = false, e_flat = false;
  int64_t e_limit = 100000;
  auto* en = app.add_subcommand("enumerate", "List dataflows or blockings");
  en->add_option("network", e_net)->required();
  en->add_option("arch", e_arch, "arch file (required for --blockings)");
  en->add_flag("--dataflows", e_df);
  en->add_flag("--blockings", e_blk);
  en->add_flag("--replication", e_repl);
  en->add_flag("--flat", e_flat);
  en->add_option("--limit", e_limit);

  std::string r_file;
  auto* re = app.add_subcommand("report", "Pretty-print a flat report");
  re->add_option("flatfile", r_file)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitUsage : kExitOk;
  }

  try {
    if (ev->parsed()) return cmd_evaluate(eo);
    if (va->parsed()) return cmd_validate(v_net, v_arch, v_trials, v_seed,
                                          v_flat);
    if (se->parsed()) return cmd_search(s_net, s_cons, s_out, s_flat, s_jobs);
    if (sw->parsed()) return cmd_sweep(w_net, w_cons, w_out, w_flat, w_jobs);
    if (en->parsed())
      return cmd_enumerate(e_net, e_df, e_blk, e_arch, e_repl, e_flat,
                           e_limit);
    if (re->parsed()) return cmd_report(r_file);
  } catch (const BudgetExceeded& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitUsage;
}
