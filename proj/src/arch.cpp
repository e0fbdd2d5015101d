#include "nest/arch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace nest {

const char* to_string(MemKind k) {
  switch (k) {
    case MemKind::RF: return "rf";
    case MemKind::InterPE: return "interpe";
    case MemKind::SRAM: return "sram";
    case MemKind::DRAM: return "dram";
  }
  return "?";
}

EnergyTable default_energy_table() {
  EnergyTable t;
  t.rf = {{16, 0.03}, {32, 0.06}, {64, 0.12},
          {128, 0.24}, {256, 0.48}, {512, 0.96}};
  t.sram = {{32 * 1024, 6.0},
            {64 * 1024, 9.0},
            {128 * 1024, 13.5},
            {256 * 1024, 20.25},
            {512 * 1024, 30.375}};
  t.mac_pj = 0.075;
  t.hop_pj = 0.035;
  t.dram_pj = 200.0;
  return t;
}

std::vector<MemLevel> ArchSpec::storage_levels() const {
  std::vector<MemLevel> out;
  for (const auto& l : levels)
    if (l.kind != MemKind::InterPE) out.push_back(l);
  return out;
}

bool ArchSpec::has_interpe() const {
  for (const auto& l : levels)
    if (l.kind == MemKind::InterPE) return true;
  return false;
}

int ArchSpec::per_pe_level_count() const {
  int p = 0;
  for (const auto& l : levels) {
    if (l.kind == MemKind::InterPE) return p;
    if (l.kind == MemKind::RF)
      ++p;
    else
      break;
  }
  return p;
}

std::vector<ArchViolation> validate_arch(const ArchSpec& arch) {
  std::vector<ArchViolation> v;
  if (arch.rows < 1 || arch.cols < 1)
    v.push_back({-1, "PE array dimensions must be >= 1"});
  if (arch.levels.empty()) {
    v.push_back({-1, "at least one memory level (DRAM) is required"});
    return v;
  }
  // Kind ordering: rf* [interpe] sram* dram.
  int stage = 0;  // 0=rf, 1=interpe seen, 2=sram, 3=dram
  int interpe_count = 0, dram_count = 0;
  for (int i = 0; i < (int)arch.levels.size(); ++i) {
    const auto& l = arch.levels[i];
    switch (l.kind) {
      case MemKind::RF:
        if (stage > 0)
          v.push_back({i, "rf level must precede interpe/sram/dram levels"});
        break;
      case MemKind::InterPE:
        ++interpe_count;
        if (stage >= 1) v.push_back({i, "interpe level out of order"});
        stage = 1;
        break;
      case MemKind::SRAM:
        if (stage >= 3) v.push_back({i, "sram level after dram"});
        stage = std::max(stage, 2);
        break;
      case MemKind::DRAM:
        ++dram_count;
        stage = 3;
        break;
    }
  }
  if (dram_count != 1)
    v.push_back({-1, "exactly one dram level is required, got " +
                         std::to_string(dram_count)});
  else if (arch.levels.back().kind != MemKind::DRAM)
    v.push_back({(int)arch.levels.size() - 1, "dram must be the outermost level"});
  if (interpe_count > 1) v.push_back({-1, "at most one interpe level"});

  int64_t prev = 0;
  for (int i = 0; i < (int)arch.levels.size(); ++i) {
    const auto& l = arch.levels[i];
    if (l.kind == MemKind::InterPE || l.kind == MemKind::DRAM) continue;
    if (l.size_bytes <= 0) {
      v.push_back({i, "on-chip level needs a positive size"});
      continue;
    }
    if (prev > l.size_bytes)
      v.push_back({i, "on-chip sizes must be non-decreasing outward"});
    prev = l.size_bytes;
  }
  return v;
}

namespace {

double interp_geometric(const std::vector<std::pair<int64_t, double>>& rows,
                        int64_t size) {
  // Exact at rows. Linear in log-log space between rows; beyond the ends
  // the first/last segment's slope is continued, which for the shipped
  // table means x2 per doubling (RF) and x1.5 per doubling (SRAM).
  const double s = static_cast<double>(size);
  for (const auto& [sz, pj] : rows)
    if (sz == size) return pj;
  auto seg = [&](size_t i0, size_t i1) {
    double s0 = std::log(static_cast<double>(rows[i0].first));
    double s1 = std::log(static_cast<double>(rows[i1].first));
    double e0 = std::log(rows[i0].second);
    double e1 = std::log(rows[i1].second);
    double t = (std::log(s) - s0) / (s1 - s0);
    return std::exp(e0 + t * (e1 - e0));
  };
  if (size < rows.front().first) return seg(0, 1);
  if (size > rows.back().first) return seg(rows.size() - 2, rows.size() - 1);
  for (size_t i = 0; i + 1 < rows.size(); ++i)
    if (size > rows[i].first && size < rows[i + 1].first) return seg(i, i + 1);
  return rows.back().second;
}

}  // namespace

double energy_per_access(const EnergyTable& t, MemKind kind,
                         int64_t size_bytes) {
  if (size_bytes <= 0 && kind != MemKind::DRAM)
    throw std::invalid_argument("energy_per_access: size must be positive");
  switch (kind) {
    case MemKind::RF: return interp_geometric(t.rf, size_bytes);
    case MemKind::SRAM: return interp_geometric(t.sram, size_bytes);
    case MemKind::DRAM: return t.dram_pj;
    case MemKind::InterPE: return t.hop_pj;
  }
  return 0.0;
}

double hop_cost(const EnergyTable& t, int64_t distance_hops) {
  return static_cast<double>(distance_hops) * t.hop_pj;
}

double level_access_energy(const ArchSpec& arch, int level_index) {
  const auto& l = arch.levels.at(level_index);
  return energy_per_access(arch.table, l.kind, l.size_bytes);
}

namespace {

std::vector<std::string> tok_line(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line);
  std::string t;
  while (in >> t) {
    if (t[0] == '#') break;
    toks.push_back(t);
  }
  return toks;
}

double parse_num(const std::string& v, const std::string& key, int ln) {
  try {
    size_t pos = 0;
    double d = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key, ln);
  }
}

}  // namespace

ArchSpec parse_arch(const std::string& text) {
  ArchSpec a;
  a.levels.clear();
  bool rf_table_reset = false, sram_table_reset = false;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto toks = tok_line(line);
    if (toks.empty()) continue;
    const std::string& cmd = toks[0];
    if (cmd == "array") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "rows")
          a.rows = (int64_t)parse_num(val, key, ln);
        else if (key == "cols")
          a.cols = (int64_t)parse_num(val, key, ln);
        else
          throw ParseError("unknown array key '" + key + "'", ln);
      }
    } else if (cmd == "level") {
      if (toks.size() < 2) throw ParseError("level needs an index", ln);
      size_t idx = (size_t)parse_num(toks[1], "level index", ln);
      if (idx != a.levels.size())
        throw ParseError("levels must appear in order starting at 0", ln);
      MemLevel m;
      for (size_t i = 2; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "kind") {
          if (val == "rf") m.kind = MemKind::RF;
          else if (val == "interpe") m.kind = MemKind::InterPE;
          else if (val == "sram") m.kind = MemKind::SRAM;
          else if (val == "dram") m.kind = MemKind::DRAM;
          else throw ParseError("unknown level kind '" + val + "'", ln);
        } else if (key == "size") {
          m.size_bytes = (val == "unbounded")
                             ? -1
                             : (int64_t)parse_num(val, key, ln);
        } else if (key == "bw") {
          m.bandwidth = (val == "unbounded") ? -1.0 : parse_num(val, key, ln);
        } else {
          throw ParseError("unknown level key '" + key + "'", ln);
        }
      }
      a.levels.push_back(m);
    } else if (cmd == "energy") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "mac") a.table.mac_pj = parse_num(val, key, ln);
        else if (key == "hop") a.table.hop_pj = parse_num(val, key, ln);
        else if (key == "dram") a.table.dram_pj = parse_num(val, key, ln);
        else throw ParseError("unknown energy key '" + key + "'", ln);
      }
    } else if (cmd == "table") {
      if (toks.size() < 3) throw ParseError("table needs a kind and entries", ln);
      std::vector<std::pair<int64_t, double>>* rows = nullptr;
      if (toks[1] == "rf") {
        if (!rf_table_reset) { a.table.rf.clear(); rf_table_reset = true; }
        rows = &a.table.rf;
      } else if (toks[1] == "sram") {
        if (!sram_table_reset) { a.table.sram.clear(); sram_table_reset = true; }
        rows = &a.table.sram;
      } else {
        throw ParseError("table kind must be rf or sram", ln);
      }
      for (size_t i = 2; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected size=pJ", ln);
        rows->emplace_back((int64_t)parse_num(toks[i].substr(0, eq), "size", ln),
                           parse_num(toks[i].substr(eq + 1), "pJ", ln));
      }
      std::sort(rows->begin(), rows->end());
    } else {
      throw ParseError("unknown directive '" + cmd + "'", ln);
    }
  }
  return a;
}

ArchSpec load_arch(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open arch file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_arch(ss.str());
}

std::string to_text(const ArchSpec& arch) {
  std::ostringstream out;
  out << "array rows=" << arch.rows << " cols=" << arch.cols << '\n';
  for (size_t i = 0; i < arch.levels.size(); ++i) {
    const auto& l = arch.levels[i];
    out << "level " << i << " kind=" << to_string(l.kind) << " size=";
    if (l.size_bytes < 0) out << "unbounded";
    else out << l.size_bytes;
    out << " bw=";
    if (l.bandwidth < 0) out << "unbounded";
    else out << l.bandwidth;
    out << '\n';
  }
  out << "energy mac=" << arch.table.mac_pj << " hop=" << arch.table.hop_pj
      << " dram=" << arch.table.dram_pj << '\n';
  EnergyTable def = default_energy_table();
  if (arch.table.rf != def.rf) {
    out << "table rf";
    for (auto& [s, e] : arch.table.rf) out << ' ' << s << '=' << e;
    out << '\n';
  }
  if (arch.table.sram != def.sram) {
    out << "table sram";
    for (auto& [s, e] : arch.table.sram) out << ' ' << s << '=' << e;
    out << '\n';
  }
  return out.str();
}

void save_arch(const ArchSpec& arch, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write arch file: " + path);
  f << to_text(arch);
}

EnergyTable load_energy_table(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open energy table: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  // Same directives as an arch file, restricted to energy/table lines.
  ArchSpec a = parse_arch(ss.str() +
                          "\nlevel 0 kind=dram size=unbounded bw=unbounded\n");
  return a.table;
}

}  // namespace nest
