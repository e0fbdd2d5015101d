#include "nest/schedule.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace nest {

int64_t Dataflow::factor(LoopId l) const {
  for (const auto& u : vertical)
    if (u.loop == l) return u.factor;
  for (const auto& u : horizontal)
    if (u.loop == l) return u.factor;
  return 1;
}

int64_t Dataflow::pe_positions() const {
  int64_t n = 1;
  for (const auto& u : vertical) n *= u.factor;
  for (const auto& u : horizontal) n *= u.factor;
  return n;
}

std::string to_string(const Dataflow& df) {
  auto side = [](const std::vector<SpatialUnroll>& v) {
    if (v.empty()) return std::string("-");
    std::string s;
    for (size_t i = 0; i < v.size(); ++i) {
      if (i) s += ',';
      s += to_string(v[i].loop);
      s += ':';
      s += std::to_string(v[i].factor);
    }
    return s;
  };
  return side(df.vertical) + "|" + side(df.horizontal);
}

NestGeometry NestGeometry::build(const LayerShape& layer, const Schedule& s,
                                 const ArchSpec& arch) {
  NestGeometry g;
  g.num_levels = (int)s.levels.size();
  g.pe_boundary = arch.per_pe_level_count();
  for (const auto& u : s.dataflow.vertical) g.spatial[(int)u.loop] *= u.factor;
  for (const auto& u : s.dataflow.horizontal) g.spatial[(int)u.loop] *= u.factor;
  g.pe_positions = s.dataflow.pe_positions();
  g.trips.resize(g.num_levels);
  g.ext.resize(g.num_levels);
  std::array<int64_t, kNumLoops> cum{1, 1, 1, 1, 1, 1, 1};
  for (int i = 0; i < g.num_levels; ++i) {
    for (int l = 0; l < kNumLoops; ++l) {
      g.trips[i][l] = s.levels[i].factors[l];
      cum[l] *= g.trips[i][l];
      g.ext[i][l] = cum[l] * (i >= g.pe_boundary ? g.spatial[l] : 1);
    }
  }
  for (int l = 0; l < kNumLoops; ++l) g.padded[l] = cum[l] * g.spatial[l];
  (void)layer;
  return g;
}

int64_t NestGeometry::tile_elems(int level, Tensor t) const {
  const auto& e = ext[level];
  auto v = [&](LoopId l) { return e[(int)l]; };
  switch (t) {
    case Tensor::I:
      return v(LoopId::B) * v(LoopId::C) *
             (v(LoopId::X) + v(LoopId::FX) - 1) *
             (v(LoopId::Y) + v(LoopId::FY) - 1);
    case Tensor::W:
      return v(LoopId::K) * v(LoopId::C) * v(LoopId::FX) * v(LoopId::FY);
    case Tensor::O:
      return v(LoopId::B) * v(LoopId::K) * v(LoopId::X) * v(LoopId::Y);
  }
  return 0;
}

int64_t NestGeometry::level_trips(int level) const {
  int64_t p = 1;
  for (int l = 0; l < kNumLoops; ++l) p *= trips[level][l];
  return p;
}

int64_t NestGeometry::padded_macs() const {
  int64_t p = 1;
  for (int l = 0; l < kNumLoops; ++l) p *= padded[l];
  return p;
}

std::string to_string(const ScheduleViolation& v) {
  std::ostringstream out;
  if (v.level >= 0) out << "level " << v.level << ": ";
  if (v.tensor) out << to_string(*v.tensor) << ": ";
  out << v.what;
  if (v.required || v.available)
    out << " (" << v.required << " > " << v.available << ")";
  return out.str();
}

std::vector<ScheduleViolation> validate_schedule(const LayerShape& layer,
                                                 const Schedule& s,
                                                 const ArchSpec& arch) {
  std::vector<ScheduleViolation> out;
  auto storage = arch.storage_levels();
  if (s.levels.size() != storage.size()) {
    out.push_back({-1, std::nullopt, (int64_t)s.levels.size(),
                   (int64_t)storage.size(),
                   "schedule level count does not match the hierarchy"});
    return out;
  }
  for (int i = 0; i < (int)s.levels.size(); ++i) {
    std::array<int, kNumLoops> seen{};
    for (LoopId l : s.levels[i].order) seen[(int)l]++;
    for (int l = 0; l < kNumLoops; ++l)
      if (seen[l] != 1) {
        out.push_back({i, std::nullopt, 0, 0,
                       std::string("order is not a permutation (loop ") +
                           to_string((LoopId)l) + ")"});
        return out;
      }
    for (int l = 0; l < kNumLoops; ++l)
      if (s.levels[i].factors[l] < 1) {
        out.push_back({i, std::nullopt, s.levels[i].factors[l], 1,
                       "tile factor must be >= 1"});
        return out;
      }
  }

  // Dataflow: each loop at most once, at most two loops per dimension,
  // per-dimension products within the array.
  {
    std::array<int, kNumLoops> used{};
    for (const auto& u : s.dataflow.vertical) used[(int)u.loop]++;
    for (const auto& u : s.dataflow.horizontal) used[(int)u.loop]++;
    for (int l = 0; l < kNumLoops; ++l)
      if (used[l] > 1)
        out.push_back({-1, std::nullopt, used[l], 1,
                       std::string("loop ") + to_string((LoopId)l) +
                           " unrolled more than once"});
    auto check_dim = [&](const std::vector<SpatialUnroll>& v, int64_t dim,
                         const char* name) {
      if (v.size() > 2)
        out.push_back({-1, std::nullopt, (int64_t)v.size(), 2,
                       std::string(name) + " unrolls more than two loops"});
      int64_t prod = 1;
      for (const auto& u : v) {
        if (u.factor < 1)
          out.push_back({-1, std::nullopt, u.factor, 1,
                         "unroll factor must be >= 1"});
        prod *= std::max<int64_t>(u.factor, 1);
      }
      if (prod > dim)
        out.push_back({-1, std::nullopt, prod, dim,
                       std::string("unroll product exceeds ") + name});
    };
    check_dim(s.dataflow.vertical, arch.rows, "rows");
    check_dim(s.dataflow.horizontal, arch.cols, "cols");
  }
  if (!out.empty()) return out;

  NestGeometry g = NestGeometry::build(layer, s, arch);
  for (int l = 0; l < kNumLoops; ++l) {
    if (g.padded[l] < layer.bound((LoopId)l))
      out.push_back({-1, std::nullopt, layer.bound((LoopId)l), g.padded[l],
                     std::string("loop ") + to_string((LoopId)l) +
                         " not covered by tile factors"});
  }

  for (int i = 0; i < g.num_levels; ++i) {
    const auto& lvl = storage[i];
    if (lvl.kind == MemKind::DRAM) continue;
    int64_t usable = lvl.kind == MemKind::SRAM ? lvl.size_bytes / 2
                                               : lvl.size_bytes;
    int64_t total = 0;
    for (Tensor t : kTensors) {
      int64_t bytes = g.tile_bytes(i, t);
      total += bytes;
      if (bytes > usable)
        out.push_back({i, t, bytes, usable, "tile exceeds level capacity"});
    }
    if (total > usable) {
      bool individual = false;
      for (Tensor t : kTensors)
        if (g.tile_bytes(i, t) > usable) individual = true;
      if (!individual)
        out.push_back({i, std::nullopt, total, usable,
                       "combined working set exceeds level capacity"});
    }
  }
  return out;
}

Dataflow replication_factors(const Dataflow& df, const LayerShape& layer,
                             int64_t rows, int64_t cols) {
  Dataflow out = df;
  auto assign = [&](std::vector<SpatialUnroll>& v, int64_t dim) {
    if (v.empty()) return;
    v[0].factor = std::min(layer.bound(v[0].loop), dim);
    if (v.size() >= 2)
      v[1].factor = std::min(layer.bound(v[1].loop), dim / v[0].factor);
  };
  assign(out.vertical, rows);
  assign(out.horizontal, cols);
  return out;
}

std::vector<Dataflow> enumerate_dataflows(const LayerShape& layer,
                                          int64_t rows, int64_t cols,
                                          bool allow_replication) {
  std::vector<LoopId> live;
  for (LoopId l : kAllLoops)
    if (layer.bound(l) > 1) live.push_back(l);

  std::vector<std::pair<int64_t, bool>> dims;  // (size, is_vertical)
  if (rows > 1) dims.emplace_back(rows, true);
  if (cols > 1) dims.emplace_back(cols, false);
  const int d = (int)dims.size();

  std::vector<Dataflow> out;
  std::set<std::string> seen;
  auto emit = [&](Dataflow df) {
    df = replication_factors(df, layer, rows, cols);
    if (seen.insert(to_string(df)).second) out.push_back(df);
  };

  if (d == 0 || (int)live.size() < d) return out;

  if (d >= 1) {
    if (d == 1) {
      for (LoopId a : live) {
        Dataflow df;
        (dims[0].second ? df.vertical : df.horizontal).push_back({a, 1});
        emit(df);
      }
    } else {
      for (size_t i = 0; i < live.size(); ++i)
        for (size_t j = i + 1; j < live.size(); ++j) {
          Dataflow df;
          df.vertical.push_back({live[i], 1});
          df.horizontal.push_back({live[j], 1});
          emit(df);
        }
    }
  }

  if (!allow_replication) return out;

  // Ordered two-loop assignments; keep only those whose secondary loop
  // gets a real factor, otherwise they collapse to a single-loop dataflow.
  auto secondary_real = [&](const Dataflow& df) {
    Dataflow f = replication_factors(df, layer, rows, cols);
    for (const auto* side : {&f.vertical, &f.horizontal})
      if (side->size() == 2 && (*side)[1].factor < 2) return false;
    return true;
  };

  if (d == 1) {
    for (LoopId a : live)
      for (LoopId b : live) {
        if (a == b) continue;
        Dataflow df;
        auto& side = dims[0].second ? df.vertical : df.horizontal;
        side.push_back({a, 1});
        side.push_back({b, 1});
        if (secondary_real(df)) emit(df);
      }
    return out;
  }

  // d == 2: tuples of 1 or 2 ordered loops per dimension, disjoint, with at
  // least one dimension replicated. Orientations are deduplicated for
  // square arrays via the canonical string key.
  std::vector<std::vector<LoopId>> tuples;
  for (LoopId a : live) tuples.push_back({a});
  for (LoopId a : live)
    for (LoopId b : live)
      if (a != b) tuples.push_back({a, b});

  const bool square = rows == cols;
  for (const auto& vt : tuples)
    for (const auto& ht : tuples) {
      if (vt.size() == 1 && ht.size() == 1) continue;
      std::set<LoopId> used(vt.begin(), vt.end());
      bool clash = false;
      for (LoopId l : ht)
        if (!used.insert(l).second) clash = true;
      if (clash) continue;
      Dataflow df;
      for (LoopId l : vt) df.vertical.push_back({l, 1});
      for (LoopId l : ht) df.horizontal.push_back({l, 1});
      if (!secondary_real(df)) continue;
      if (square) {
        Dataflow swapped;
        swapped.vertical = df.horizontal;
        swapped.horizontal = df.vertical;
        Dataflow a = replication_factors(df, layer, rows, cols);
        Dataflow b = replication_factors(swapped, layer, rows, cols);
        if (to_string(b) < to_string(a)) continue;  // keep one orientation
      }
      emit(df);
    }
  return out;
}

namespace {

// Ascending divisors of n.
std::vector<int64_t> divisors(int64_t n) {
  std::vector<int64_t> lo, hi;
  for (int64_t d = 1; d * d <= n; ++d) {
    if (n % d) continue;
    lo.push_back(d);
    if (d != n / d) hi.push_back(n / d);
  }
  lo.insert(lo.end(), hi.rbegin(), hi.rend());
  return lo;
}

struct BlockingEnum {
  const LayerShape& layer;
  const Schedule& skeleton;
  const ArchSpec& arch;
  const std::function<bool(const Schedule&)>& visit;
  std::vector<MemLevel> storage;
  int M = 0, p = 0;
  std::array<int64_t, kNumLoops> spatial{1, 1, 1, 1, 1, 1, 1};
  std::vector<int64_t> usable;                       // capacity per level
  std::vector<std::array<int64_t, kNumLoops>> trips; // chosen factors
  bool stopped = false;

  bool run() {
    for (const auto& u : skeleton.dataflow.vertical)
      spatial[(int)u.loop] *= u.factor;
    for (const auto& u : skeleton.dataflow.horizontal)
      spatial[(int)u.loop] *= u.factor;
    std::array<int64_t, kNumLoops> tb;
    for (int l = 0; l < kNumLoops; ++l) {
      int64_t b = layer.bound((LoopId)l);
      tb[l] = (b + spatial[l] - 1) / spatial[l];
    }
    trips.assign(M, {1, 1, 1, 1, 1, 1, 1});
    choose_level(0, tb, {1, 1, 1, 1, 1, 1, 1});
    return !stopped;
  }

  bool capacity_ok(int level, const std::array<int64_t, kNumLoops>& cum) {
    if (storage[level].kind == MemKind::DRAM) return true;
    std::array<int64_t, kNumLoops> e;
    for (int l = 0; l < kNumLoops; ++l)
      e[l] = cum[l] * (level >= p ? spatial[l] : 1);
    auto v = [&](LoopId l) { return e[(int)l]; };
    int64_t elems =
        v(LoopId::B) * v(LoopId::C) *
            (v(LoopId::X) + v(LoopId::FX) - 1) *
            (v(LoopId::Y) + v(LoopId::FY) - 1) +
        v(LoopId::K) * v(LoopId::C) * v(LoopId::FX) * v(LoopId::FY) +
        v(LoopId::B) * v(LoopId::K) * v(LoopId::X) * v(LoopId::Y);
    return elems * ArchSpec::word_bytes <= usable[level];
  }

  void choose_level(int level, std::array<int64_t, kNumLoops> rem,
                    std::array<int64_t, kNumLoops> cum) {
    if (stopped) return;
    if (level == M - 1) {
      // Outermost level takes whatever remains.
      for (int l = 0; l < kNumLoops; ++l) {
        trips[level][l] = rem[l];
        cum[l] *= rem[l];
      }
      if (!capacity_ok(level, cum)) return;
      emit_orders();
      return;
    }
    choose_loop(level, 0, rem, cum);
  }

  void choose_loop(int level, int loop, std::array<int64_t, kNumLoops>& rem,
                   std::array<int64_t, kNumLoops> cum) {
    if (stopped) return;
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
      if (stopped) break;
    }
    rem[loop] = r;
  }

  void emit_orders() {
    // Per level: permutations of the non-unit loops; unit loops trail in
    // canonical order (the canonicalize convention).
    std::vector<std::vector<LoopId>> nonunit(M), unit(M);
    for (int i = 0; i < M; ++i)
      for (LoopId l : kAllLoops)
        (trips[i][(int)l] > 1 ? nonunit[i] : unit[i]).push_back(l);

    std::vector<std::vector<std::array<LoopId, kNumLoops>>> orders(M);
    for (int i = 0; i < M; ++i) {
      auto perm = nonunit[i];
      do {
        std::array<LoopId, kNumLoops> full;
        size_t n = 0;
        for (LoopId l : perm) full[n++] = l;
        for (LoopId l : unit[i]) full[n++] = l;
        orders[i].push_back(full);
      } while (std::next_permutation(perm.begin(), perm.end()));
    }

    std::vector<size_t> idx(M, 0);
    while (true) {
      Schedule s;
      s.dataflow = skeleton.dataflow;
      s.levels.resize(M);
      for (int i = 0; i < M; ++i) {
        s.levels[i].factors = trips[i];
        s.levels[i].order = orders[i][idx[i]];
      }
      if (!visit(s)) {
        stopped = true;
        return;
      }
      int i = M - 1;
      while (i >= 0 && ++idx[i] == orders[i].size()) idx[i--] = 0;
      if (i < 0) break;
    }
  }
};

}  // namespace

void enumerate_blockings(const LayerShape& layer, const Schedule& skeleton,
                         const ArchSpec& arch,
                         const std::function<bool(const Schedule&)>& visit) {
  auto storage = arch.storage_levels();
  if (storage.empty()) return;
  {
    // The skeleton's dataflow must itself fit the array.
    Schedule probe = skeleton;
    probe.levels.assign(storage.size(), BlockingLevel{});
    int64_t vp = 1, hp = 1;
    for (const auto& u : skeleton.dataflow.vertical) vp *= u.factor;
    for (const auto& u : skeleton.dataflow.horizontal) hp *= u.factor;
    if (vp > arch.rows || hp > arch.cols) return;
  }
  BlockingEnum e{layer,        skeleton, arch, visit,
                 {},           0,        0,    {1, 1, 1, 1, 1, 1, 1},
                 {},           {},       false};
  e.storage = storage;
  e.M = (int)storage.size();
  e.p = arch.per_pe_level_count();
  e.usable.resize(e.M);
  for (int i = 0; i < e.M; ++i) {
    if (storage[i].kind == MemKind::DRAM)
      e.usable[i] = INT64_MAX;
    else if (storage[i].kind == MemKind::SRAM)
      e.usable[i] = storage[i].size_bytes / 2;
    else
      e.usable[i] = storage[i].size_bytes;
  }
  e.run();
}

std::vector<Schedule> list_blockings(const LayerShape& layer,
                                     const Schedule& skeleton,
                                     const ArchSpec& arch, size_t cap) {
  std::vector<Schedule> out;
  enumerate_blockings(layer, skeleton, arch, [&](const Schedule& s) {
    out.push_back(s);
    return cap == 0 || out.size() < cap;
  });
  return out;
}

Schedule canonicalize(const Schedule& s) {
  Schedule out = s;
  for (auto& lvl : out.levels) {
    std::array<LoopId, kNumLoops> reordered;
    size_t n = 0;
    for (LoopId l : lvl.order)
      if (lvl.factors[(int)l] > 1) reordered[n++] = l;
    for (LoopId l : kAllLoops)
      if (lvl.factors[(int)l] <= 1) reordered[n++] = l;
    lvl.order = reordered;
  }
  return out;
}

std::string canonical_key(const Schedule& s) {
  std::ostringstream out;
  out << to_string(s.dataflow);
  for (const auto& lvl : s.levels) {
    out << ";";
    for (LoopId l : lvl.order)
      if (lvl.factors[(int)l] > 1)
        out << to_string(l) << lvl.factors[(int)l] << ',';
  }
  return out.str();
}

namespace {

std::vector<SpatialUnroll> parse_unroll_list(const std::string& v, int ln) {
  std::vector<SpatialUnroll> out;
  if (v.empty() || v == "-" || v == "none") return out;
  std::istringstream in(v);
  std::string item;
  while (std::getline(in, item, ',')) {
    SpatialUnroll u;
    auto colon = item.find(':');
    std::string name = item.substr(0, colon);
    if (!parse_loop_id(name, u.loop))
      throw ParseError("unknown loop '" + name + "'", ln);
    if (colon != std::string::npos) {
      try {
        u.factor = std::stoll(item.substr(colon + 1));
      } catch (const std::exception&) {
        throw ParseError("bad unroll factor in '" + item + "'", ln);
      }
    }
    out.push_back(u);
  }
  return out;
}

}  // namespace

Schedule parse_schedule(const std::string& text) {
  Schedule s;
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
    if (toks[0] == "dataflow") {
      for (size_t i = 1; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "vert")
          s.dataflow.vertical = parse_unroll_list(val, ln);
        else if (key == "horiz")
          s.dataflow.horizontal = parse_unroll_list(val, ln);
        else
          throw ParseError("unknown dataflow key '" + key + "'", ln);
      }
    } else if (toks[0] == "level") {
      if (toks.size() < 2) throw ParseError("level needs an index", ln);
      size_t idx = 0;
      try {
        idx = std::stoul(toks[1]);
      } catch (const std::exception&) {
        throw ParseError("bad level index '" + toks[1] + "'", ln);
      }
      if (idx != s.levels.size())
        throw ParseError("levels must appear in order starting at 0", ln);
      BlockingLevel lvl;
      bool have_order = false;
      for (size_t i = 2; i < toks.size(); ++i) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos) throw ParseError("expected key=value", ln);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "order") {
          std::istringstream os(val);
          std::string name;
          size_t n = 0;
          std::array<int, kNumLoops> seen{};
          while (std::getline(os, name, ',')) {
            LoopId l;
            if (!parse_loop_id(name, l))
              throw ParseError("unknown loop '" + name + "'", ln);
            if (n >= kNumLoops) throw ParseError("order lists too many loops", ln);
            lvl.order[n++] = l;
            seen[(int)l]++;
          }
          if (n != kNumLoops)
            throw ParseError("order must list all 7 loops", ln);
          for (int l = 0; l < kNumLoops; ++l)
            if (seen[l] != 1)
              throw ParseError("order must be a permutation of the 7 loops", ln);
          have_order = true;
        } else if (key == "factors") {
          std::istringstream fs(val);
          std::string item;
          while (std::getline(fs, item, ',')) {
            auto e2 = item.find('=');
            if (e2 == std::string::npos)
              throw ParseError("expected Loop=n in factors", ln);
            LoopId l;
            if (!parse_loop_id(item.substr(0, e2), l))
              throw ParseError("unknown loop '" + item.substr(0, e2) + "'", ln);
            try {
              lvl.factors[(int)l] = std::stoll(item.substr(e2 + 1));
            } catch (const std::exception&) {
              throw ParseError("bad factor in '" + item + "'", ln);
            }
          }
        } else {
          throw ParseError("unknown level key '" + key + "'", ln);
        }
      }
      (void)have_order;
      s.levels.push_back(lvl);
    } else {
      throw ParseError("unknown directive '" + toks[0] + "'", ln);
    }
  }
  return s;
}

Schedule load_schedule(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open schedule file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_schedule(ss.str());
}

std::string to_text(const Schedule& s) {
  std::ostringstream out;
  if (!s.dataflow.empty()) {
    auto side = [](const std::vector<SpatialUnroll>& v) {
      std::string r;
      for (size_t i = 0; i < v.size(); ++i) {
        if (i) r += ',';
        r += to_string(v[i].loop);
        r += ':';
        r += std::to_string(v[i].factor);
      }
      return r;
    };
    out << "dataflow vert=" << side(s.dataflow.vertical)
        << " horiz=" << side(s.dataflow.horizontal) << '\n';
  }
  for (size_t i = 0; i < s.levels.size(); ++i) {
    const auto& lvl = s.levels[i];
    out << "level " << i << " order=";
    for (int j = 0; j < kNumLoops; ++j) {
      if (j) out << ',';
      out << to_string(lvl.order[j]);
    }
    bool any = false;
    for (int l = 0; l < kNumLoops; ++l)
      if (lvl.factors[l] != 1) any = true;
    if (any) {
      out << " factors=";
      bool first = true;
      for (LoopId l : kAllLoops)
        if (lvl.factors[(int)l] != 1) {
          if (!first) out << ',';
          out << to_string(l) << '=' << lvl.factors[(int)l];
          first = false;
        }
    }
    out << '\n';
  }
  return out.str();
}

void save_schedule(const Schedule& s, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write schedule file: " + path);
  f << to_text(s);
}

}  // namespace nest
