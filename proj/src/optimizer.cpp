#include "nest/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <future>
#include <set>
#include <sstream>

namespace nest {

namespace {

// Loops sharing an indexing pattern: K | C,FX,FY | B,X,Y. The innermost
// non-unit run of one class is what creates reuse for the tensor that
// class does not index.
int loop_class(LoopId l) {
  switch (l) {
    case LoopId::K: return 0;
    case LoopId::C:
    case LoopId::FX:
    case LoopId::FY: return 1;
    default: return 2;
  }
}

struct FastSearch {
  const LayerShape& layer;
  const ArchSpec& arch;
  Objective obj;
  double min_util;
  int64_t budget;
  int64_t* evals;
  const std::function<void(double)>* on_eval = nullptr;

  std::vector<MemLevel> storage;
  int M = 0, p = 0;
  std::array<int64_t, kNumLoops> S{1, 1, 1, 1, 1, 1, 1};
  std::vector<int64_t> usable;
  Schedule work;  // reused across evaluations
  std::vector<std::array<int64_t, kNumLoops>> trips;
  CostWorkspace ws;

  bool found = false;
  double best_obj = 0.0;
  int64_t best_runtime = 0;
  std::string best_key;
  Schedule best_sched;
  CostReport best_report;

  FastSearch(const LayerShape& l, const ArchSpec& a, Objective o, double mu,
             int64_t b, int64_t* ev)
      : layer(l), arch(a), obj(o), min_util(mu), budget(b), evals(ev) {
    storage = arch.storage_levels();
    M = (int)storage.size();
    usable.resize(M);
    for (int i = 0; i < M; ++i)
      usable[i] = storage[i].kind == MemKind::DRAM ? INT64_MAX
                  : storage[i].kind == MemKind::SRAM
                      ? storage[i].size_bytes / 2
                      : storage[i].size_bytes;
    p = arch.per_pe_level_count();
    trips.assign(M, {1, 1, 1, 1, 1, 1, 1});
    work.levels.assign(M, BlockingLevel{});
  }

  void run(const Dataflow& df) {
    int64_t vp = 1, hp = 1;
    for (const auto& u : df.vertical) vp *= u.factor;
    for (const auto& u : df.horizontal) hp *= u.factor;
    if (vp > arch.rows || hp > arch.cols) return;
    work.dataflow = df;
    for (int l = 0; l < kNumLoops; ++l) S[l] = 1;
    for (const auto& u : df.vertical) S[(int)u.loop] *= u.factor;
    for (const auto& u : df.horizontal) S[(int)u.loop] *= u.factor;
    std::array<int64_t, kNumLoops> tb;
    for (int l = 0; l < kNumLoops; ++l) {
      int64_t b = layer.bound((LoopId)l);
      tb[l] = (b + S[l] - 1) / S[l];
    }
    choose_level(0, tb, {1, 1, 1, 1, 1, 1, 1});
  }

  bool capacity_ok(int level, const std::array<int64_t, kNumLoops>& cum) {
    if (storage[level].kind == MemKind::DRAM) return true;
    std::array<int64_t, kNumLoops> e;
    for (int l = 0; l < kNumLoops; ++l)
      e[l] = cum[l] * (level >= p ? S[l] : 1);
    auto v = [&](LoopId l) { return e[(int)l]; };
    int64_t elems =
        v(LoopId::B) * v(LoopId::C) * (v(LoopId::X) + v(LoopId::FX) - 1) *
            (v(LoopId::Y) + v(LoopId::FY) - 1) +
        v(LoopId::K) * v(LoopId::C) * v(LoopId::FX) * v(LoopId::FY) +
        v(LoopId::B) * v(LoopId::K) * v(LoopId::X) * v(LoopId::Y);
    return elems * ArchSpec::word_bytes <= usable[level];
  }

  static std::vector<int64_t> divisors(int64_t n) {
    std::vector<int64_t> lo, hi;
    for (int64_t d = 1; d * d <= n; ++d) {
      if (n % d) continue;
      lo.push_back(d);
      if (d != n / d) hi.push_back(n / d);
    }
    lo.insert(lo.end(), hi.rbegin(), hi.rend());
    return lo;
  }

  void choose_level(int level, std::array<int64_t, kNumLoops> rem,
                    std::array<int64_t, kNumLoops> cum) {
    if (level == M - 1) {
      for (int l = 0; l < kNumLoops; ++l) {
        trips[level][l] = rem[l];
        cum[l] *= rem[l];
      }
      if (!capacity_ok(level, cum)) return;
      evaluate_orders();
      return;
    }
    choose_loop(level, 0, rem, cum);
  }

  void choose_loop(int level, int loop, std::array<int64_t, kNumLoops>& rem,
                   std::array<int64_t, kNumLoops> cum) {
    if (loop == kNumLoops) {
      if (!capacity_ok(level, cum)) return;
      choose_level(level + 1, rem, cum);
      return;
    }
    int64_t r = rem[loop];
    for (int64_t d : divisors(r)) {
      trips[level][loop] = d;
      rem[loop] = r / d;
      auto cum2 = cum;
      cum2[loop] *= d;
      choose_loop(level, loop + 1, rem, cum2);
    }
    rem[loop] = r;
  }

  // One canonical order per (level, innermost class): the chosen class's
  // non-unit loops form the innermost run, every other order is dominated
  // or count-identical.
  void build_order(int level, int cls, std::array<LoopId, kNumLoops>& out) {
    size_t n = 0;
    for (LoopId l : kAllLoops)
      if (trips[level][(int)l] > 1 && loop_class(l) != cls) out[n++] = l;
    for (LoopId l : kAllLoops)
      if (trips[level][(int)l] > 1 && loop_class(l) == cls) out[n++] = l;
    for (LoopId l : kAllLoops)
      if (trips[level][(int)l] <= 1) out[n++] = l;
  }

  void evaluate_orders() {
    std::array<std::vector<int>, CostWorkspace::kMaxLevels> choices;
    for (int i = 0; i < M; ++i) {
      if (i == 0) {
        choices[i] = {0};  // innermost order never changes the counts
        continue;
      }
      bool present[3] = {false, false, false};
      for (LoopId l : kAllLoops)
        if (trips[i][(int)l] > 1) present[loop_class(l)] = true;
      for (int c = 0; c < 3; ++c)
        if (present[c]) choices[i].push_back(c);
      if (choices[i].empty()) choices[i].push_back(0);
    }

    std::array<size_t, CostWorkspace::kMaxLevels> idx{};
    for (int i = 0; i < M; ++i) {
      work.levels[i].factors = trips[i];
      build_order(i, choices[i][0], work.levels[i].order);
    }
    while (true) {
      evaluate_one();
      int i = M - 1;
      while (i >= 1 && ++idx[i] == choices[i].size()) {
        idx[i] = 0;
        build_order(i, choices[i][0], work.levels[i].order);
        --i;
      }
      if (i < 1) break;
      build_order(i, choices[i][idx[i]], work.levels[i].order);
    }
  }

  void evaluate_one() {
    if (++*evals > budget)
      throw BudgetExceeded("blocking search exceeded the evaluation budget");
    ws.compute(layer, work, arch);
    if (on_eval) (*on_eval)(ws.total_energy());
    if (ws.utilization() + 1e-12 < min_util) return;
    double v = obj == Objective::Energy
                   ? ws.total_energy()
                   : ws.total_energy() * (double)ws.runtime_cycles();
    if (found) {
      if (v > best_obj) return;
      if (v == best_obj) {
        if (ws.runtime_cycles() > best_runtime) return;
        if (ws.runtime_cycles() == best_runtime &&
            canonical_key(work) >= best_key)
          return;
      }
    }
    found = true;
    best_obj = v;
    best_runtime = ws.runtime_cycles();
    best_sched = work;
    best_key = canonical_key(work);
    best_report = ws.report(arch);
  }
};

}  // namespace

std::optional<SearchResult> exhaustive_search(
    const LayerShape& layer, const ArchSpec& arch,
    const std::vector<Dataflow>& dataflows, Objective obj, int64_t budget,
    double min_utilization) {
  int64_t evals = 0;
  FastSearch fs(layer, arch, obj, min_utilization, budget, &evals);
  if (dataflows.empty()) {
    fs.run(Dataflow{});
  } else {
    for (const auto& df : dataflows) fs.run(df);
  }
  if (!fs.found) return std::nullopt;
  return SearchResult{fs.best_sched, fs.best_report, fs.best_obj};
}

void scan_blocking_energies(const LayerShape& layer, const ArchSpec& arch,
                            const Dataflow& df,
                            const std::function<void(double)>& fn,
                            int64_t budget) {
  int64_t evals = 0;
  FastSearch fs(layer, arch, Objective::Energy, 0.0, budget, &evals);
  fs.on_eval = &fn;
  fs.run(df);
}

std::vector<Dataflow> ck_dataflows(const LayerShape& layer, int64_t rows,
                                   int64_t cols) {
  auto all = enumerate_dataflows(layer, rows, cols, true);
  std::vector<Dataflow> out;
  std::set<std::string> seen;
  for (const auto& df : all) {
    if (df.vertical.empty() || df.horizontal.empty()) continue;
    LoopId v0 = df.vertical[0].loop, h0 = df.horizontal[0].loop;
    bool ck = v0 == LoopId::C && h0 == LoopId::K;
    bool kc = v0 == LoopId::K && h0 == LoopId::C;
    if (!ck && !kc) continue;
    Dataflow d = df;
    if (kc) std::swap(d.vertical, d.horizontal);  // conventional orientation
    d = replication_factors(d, layer, rows, cols);
    if (seen.insert(to_string(d)).second) out.push_back(d);
  }
  if (out.empty()) {
    // Layer cannot map C|K (degenerate bounds); fall back to plain choices.
    auto plain = enumerate_dataflows(layer, rows, cols, false);
    out = plain;
  }
  return out;
}

ArchSpec build_arch(int64_t rows, int64_t cols, int64_t rf_bytes,
                    int64_t rf2_bytes, int64_t sram_bytes,
                    const SearchConstraints& c) {
  ArchSpec a;
  a.rows = rows;
  a.cols = cols;
  a.table = c.table;
  a.levels.clear();
  a.levels.push_back({MemKind::RF, rf_bytes, c.rf_bw});
  if (rf2_bytes > 0) a.levels.push_back({MemKind::RF, rf2_bytes, c.rf2_bw});
  a.levels.push_back({MemKind::InterPE, -1, c.interpe_bw});
  a.levels.push_back({MemKind::SRAM, sram_bytes, c.sram_bw});
  a.levels.push_back({MemKind::DRAM, -1, c.dram_bw});
  return a;
}

std::pair<double, double> aggregate_network_energy(
    const Network& net, const ArchSpec& arch,
    const std::vector<CostReport>& reports) {
  auto storage = arch.storage_levels();
  int M = (int)storage.size();
  double total = 0.0;
  for (const auto& r : reports) total += r.total_energy;
  double elided = 0.0;
  if (M >= 2) {
    const MemLevel& outer = storage[M - 2];
    int64_t cap = outer.kind == MemKind::SRAM
                      ? outer.size_bytes / 2
                      : outer.size_bytes * arch.pe_count();
    auto fits = [&](const LayerShape& l) {
      int64_t ws = (footprint(l, Tensor::I) + footprint(l, Tensor::W) +
                    footprint(l, Tensor::O)) *
                   ArchSpec::word_bytes;
      return ws <= cap;
    };
    for (size_t n = 1; n < net.layers.size(); ++n) {
      if (!fits(net.layers[n].second) || !fits(net.layers[n - 1].second))
        continue;
      const auto& cur = reports[n].counts.levels[M - 1][(int)Tensor::I];
      const auto& prev = reports[n - 1].counts.levels[M - 1][(int)Tensor::O];
      elided += (double)cur.reads * arch.table.dram_pj;
      elided += (double)prev.writes * arch.table.dram_pj;
    }
  }
  return {total - elided, elided};
}

namespace {

std::string arch_key(const DesignPoint& d) {
  std::string k = to_text(d.arch);
  for (const auto& [name, s] : d.schedules) k += name + ":" + to_text(s);
  return k;
}

bool better_design(const DesignPoint& a, const DesignPoint& b) {
  if (a.objective_value != b.objective_value)
    return a.objective_value < b.objective_value;
  if (a.total_runtime != b.total_runtime)
    return a.total_runtime < b.total_runtime;
  if (a.onchip_bytes != b.onchip_bytes) return a.onchip_bytes < b.onchip_bytes;
  return arch_key(a) < arch_key(b);
}

struct Candidate {
  int64_t rows, cols, rf, rf2, sram;
};

std::optional<DesignPoint> evaluate_candidate(const Network& net,
                                              const Candidate& cand,
                                              const SearchConstraints& c,
                                              std::string* fail_reason) {
  ArchSpec arch = build_arch(cand.rows, cand.cols, cand.rf, cand.rf2,
                             cand.sram, c);
  DesignPoint d;
  d.arch = arch;
  for (const auto& [name, layer] : net.layers) {
    auto dfs = ck_dataflows(layer, arch.rows, arch.cols);
    auto best = exhaustive_search(layer, arch, dfs, c.objective, c.budget,
                                  c.min_utilization);
    if (!best) {
      if (fail_reason && fail_reason->empty())
        *fail_reason = "layer " + name + " has no valid blocking under rf=" +
                       std::to_string(cand.rf) +
                       (cand.rf2 ? " rf2=" + std::to_string(cand.rf2) : "") +
                       " sram=" + std::to_string(cand.sram);
      return std::nullopt;
    }
    d.schedules.emplace_back(name, best->schedule);
    d.reports.push_back(best->report);
  }
  auto [etotal, elided] = aggregate_network_energy(net, arch, d.reports);
  d.total_energy = etotal;
  d.dram_elided_pj = elided;
  d.total_runtime = 0;
  for (const auto& r : d.reports) d.total_runtime += r.runtime_cycles;
  d.objective_value = c.objective == Objective::Energy
                          ? d.total_energy
                          : d.total_energy * (double)d.total_runtime;
  d.onchip_bytes = cand.rf * cand.rows * cand.cols +
                   cand.rf2 * cand.rows * cand.cols + cand.sram;
  return d;
}

}  // namespace

SearchOutcome pruned_search(const Network& net, const SearchConstraints& c) {
  SearchOutcome out;
  if (net.layers.empty()) {
    out.no_solution = "network has no layers";
    return out;
  }
  if (c.rf_sizes.empty() || c.sram_sizes.empty()) {
    out.no_solution = "constraints need non-empty rf and sram size sets";
    return out;
  }

  std::vector<Candidate> cands;
  bool any_combo = false;
  for (auto [rows, cols] : c.arrays) {
    std::vector<int64_t> rf2s = c.rf2_sizes.empty()
                                    ? std::vector<int64_t>{0}
                                    : c.rf2_sizes;
    for (int64_t rf : c.rf_sizes)
      for (int64_t rf2 : rf2s)
        for (int64_t sram : c.sram_sizes) {
          any_combo = true;
          std::vector<int64_t> totals;
          totals.push_back(rf * rows * cols);
          if (rf2 > 0) totals.push_back(rf2 * rows * cols);
          totals.push_back(sram);
          bool ok = true;
          for (size_t i = 0; i + 1 < totals.size(); ++i) {
            double ratio = (double)totals[i + 1] / (double)totals[i];
            if (ratio < c.ratio_lo || ratio > c.ratio_hi) ok = false;
          }
          if (ok) cands.push_back({rows, cols, rf, rf2, sram});
        }
  }
  if (cands.empty()) {
    out.no_solution =
        any_combo
            ? "the adjacent-level size-ratio rule [" +
                  std::to_string((int)c.ratio_lo) + "," +
                  std::to_string((int)c.ratio_hi) +
                  "] eliminated every candidate hierarchy"
            : "no candidate hierarchies to evaluate";
    return out;
  }
  out.candidates_tried = (int64_t)cands.size();

  std::vector<std::optional<DesignPoint>> results(cands.size());
  std::vector<std::string> reasons(cands.size());
  int jobs = std::max(1, c.jobs);
  for (size_t base = 0; base < cands.size(); base += jobs) {
    size_t end = std::min(cands.size(), base + jobs);
    std::vector<std::future<std::optional<DesignPoint>>> futs;
    for (size_t i = base; i < end; ++i)
      futs.push_back(std::async(std::launch::async, [&, i] {
        return evaluate_candidate(net, cands[i], c, &reasons[i]);
      }));
    for (size_t i = base; i < end; ++i) results[i] = futs[i - base].get();
  }

  for (size_t i = 0; i < cands.size(); ++i) {
    if (!results[i]) continue;
    if (!out.best || better_design(*results[i], *out.best))
      out.best = std::move(results[i]);
  }
  if (!out.best) {
    for (auto& r : reasons)
      if (!r.empty()) {
        out.no_solution = r;
        break;
      }
    if (out.no_solution.empty())
      out.no_solution = "no candidate produced a valid design";
  }
  return out;
}

std::vector<std::pair<std::pair<int64_t, int64_t>, SearchOutcome>>
sweep_pe_array(const Network& net, const SearchConstraints& c) {
  auto arrays = c.arrays;
  std::sort(arrays.begin(), arrays.end(),
            [](const auto& a, const auto& b) {
              return a.first * a.second < b.first * b.second;
            });
  std::vector<std::pair<std::pair<int64_t, int64_t>, SearchOutcome>> out;
  for (auto a : arrays) {
    SearchConstraints c2 = c;
    c2.arrays = {a};
    out.emplace_back(a, pruned_search(net, c2));
  }
  return out;
}

namespace {

double parse_double_or(const std::string& v, const std::string& key, int ln) {
  if (v == "unbounded") return -1.0;
  try {
    return std::stod(v);
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key, ln);
  }
}

std::vector<int64_t> parse_size_list(const std::string& v, int ln,
                                     bool allow_none) {
  std::vector<int64_t> out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    if (item == "none") {
      if (!allow_none) throw ParseError("'none' not allowed here", ln);
      out.push_back(0);
      continue;
    }
    try {
      out.push_back(std::stoll(item));
    } catch (const std::exception&) {
      throw ParseError("bad size '" + item + "'", ln);
    }
  }
  return out;
}

}  // namespace

SearchConstraints parse_constraints(const std::string& text) {
  SearchConstraints c;
  c.arrays.clear();
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    std::istringstream ls(line);
    std::vector<std::string> toks;
    std::string t;
    while (ls >> t) {
      if (t[0] == '#') break;
      toks.push_back(t);
    }
    if (toks.empty()) continue;
    const std::string& cmd = toks[0];
    if (cmd == "arrays") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto x = toks[i].find('x');
        if (x == std::string::npos)
          throw ParseError("array must look like 16x16", ln);
        c.arrays.emplace_back(std::stoll(toks[i].substr(0, x)),
                              std::stoll(toks[i].substr(x + 1)));
      }
    } else if (cmd == "level") {
      if (toks.size() < 3) throw ParseError("level needs a kind and sizes", ln);
      auto eq = toks[2].find('=');
      if (eq == std::string::npos || toks[2].substr(0, eq) != "sizes")
        throw ParseError("expected sizes=<list>", ln);
      auto sizes = parse_size_list(toks[2].substr(eq + 1), ln, toks[1] == "rf2");
      if (toks[1] == "rf") c.rf_sizes = sizes;
      else if (toks[1] == "rf2") c.rf2_sizes = sizes;
      else if (toks[1] == "sram") c.sram_sizes = sizes;
      else throw ParseError("unknown level '" + toks[1] + "'", ln);
    } else if (cmd == "bw") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        double b = parse_double_or(val, key, ln);
        if (key == "rf") c.rf_bw = b;
        else if (key == "rf2") c.rf2_bw = b;
        else if (key == "interpe") c.interpe_bw = b;
        else if (key == "sram") c.sram_bw = b;
        else if (key == "dram") c.dram_bw = b;
        else throw ParseError("unknown bw key '" + key + "'", ln);
      }
    } else if (cmd == "energy") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "mac") c.table.mac_pj = parse_double_or(val, key, ln);
        else if (key == "hop") c.table.hop_pj = parse_double_or(val, key, ln);
        else if (key == "dram") c.table.dram_pj = parse_double_or(val, key, ln);
        else throw ParseError("unknown energy key '" + key + "'", ln);
      }
    } else if (cmd == "objective") {
      if (toks.size() != 2) throw ParseError("objective needs a value", ln);
      if (toks[1] == "energy") c.objective = Objective::Energy;
      else if (toks[1] == "edp") c.objective = Objective::EnergyDelayProduct;
      else throw ParseError("objective must be energy or edp", ln);
    } else if (cmd == "min_utilization") {
      c.min_utilization = parse_double_or(toks.at(1), cmd, ln);
    } else if (cmd == "budget") {
      c.budget = (int64_t)parse_double_or(toks.at(1), cmd, ln);
    } else if (cmd == "ratio") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "lo") c.ratio_lo = parse_double_or(val, key, ln);
        else if (key == "hi") c.ratio_hi = parse_double_or(val, key, ln);
        else throw ParseError("unknown ratio key '" + key + "'", ln);
      }
    } else if (cmd == "jobs") {
      c.jobs = (int)parse_double_or(toks.at(1), cmd, ln);
    } else {
      throw ParseError("unknown directive '" + cmd + "'", ln);
    }
  }
  if (c.arrays.empty()) c.arrays = {{16, 16}};
  return c;
}

SearchConstraints load_constraints(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open constraints file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_constraints(ss.str());
}

}  // namespace nest
