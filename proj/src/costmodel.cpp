#include "nest/costmodel.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace nest {

namespace {

// Hops to serve one value-tile to every sharing position along one physical
// dimension. The leftmost loop's group moves nearest-neighbor; crossing to
// the next group costs a full group stride (the ordered-replication rule).
int64_t chain_hops_dim(const std::vector<SpatialUnroll>& dim, Tensor t) {
  int64_t s1 = dim.size() >= 1 ? dim[0].factor : 1;
  int64_t s2 = dim.size() >= 2 ? dim[1].factor : 1;
  bool spans1 = dim.size() < 1 || s1 == 1 || !loop_indexes_tensor(dim[0].loop, t);
  bool spans2 = dim.size() < 2 || s2 == 1 || !loop_indexes_tensor(dim[1].loop, t);
  if (spans1 && spans2) return s2 * (s1 - 1) + (s2 - 1) * s1;
  if (spans1) return s1 - 1;
  if (spans2) return (s2 - 1) * s1;
  return 0;
}

int64_t group_positions_dim(const std::vector<SpatialUnroll>& dim, Tensor t) {
  int64_t g = 1;
  for (const auto& u : dim)
    if (!loop_indexes_tensor(u.loop, t)) g *= u.factor;
  return g;
}

}  // namespace

void CostWorkspace::compute(const LayerShape& layer, const Schedule& s,
                            const ArchSpec& arch) {
  auto storage = arch.storage_levels();
  M_ = (int)storage.size();
  assert(M_ >= 1 && M_ <= kMaxLevels);
  assert((int)s.levels.size() == M_);
  p_ = arch.per_pe_level_count();
  has_interpe_ = arch.has_interpe();
  npes_ = s.dataflow.pe_positions();

  // Arch-level bookkeeping for the report.
  num_arch_levels_ = (int)arch.levels.size();
  interpe_arch_index_ = -1;
  {
    int si = 0;
    for (int a = 0; a < num_arch_levels_; ++a) {
      if (arch.levels[a].kind == MemKind::InterPE)
        interpe_arch_index_ = a;
      else
        storage_arch_index_[si++] = a;
    }
  }

  for (int l = 0; l < kNumLoops; ++l) spatial_[l] = 1;
  for (const auto& u : s.dataflow.vertical) spatial_[(int)u.loop] *= u.factor;
  for (const auto& u : s.dataflow.horizontal) spatial_[(int)u.loop] *= u.factor;

  int64_t cum[kNumLoops], padded[kNumLoops];
  for (int l = 0; l < kNumLoops; ++l) cum[l] = 1;
  for (int i = 0; i < M_; ++i)
    for (int l = 0; l < kNumLoops; ++l) {
      trips_[i][l] = s.levels[i].factors[l];
      cum[l] *= trips_[i][l];
      ext_[i][l] = cum[l] * (i >= p_ ? spatial_[l] : 1);
    }
  macs_ = 1;
  for (int l = 0; l < kNumLoops; ++l) {
    padded[l] = cum[l] * spatial_[l];
    macs_ *= padded[l];
  }

  for (int i = 0; i < M_; ++i) {
    auto v = [&](LoopId l) { return ext_[i][(int)l]; };
    ts_[i][(int)Tensor::I] = v(LoopId::B) * v(LoopId::C) *
                             (v(LoopId::X) + v(LoopId::FX) - 1) *
                             (v(LoopId::Y) + v(LoopId::FY) - 1);
    ts_[i][(int)Tensor::W] =
        v(LoopId::K) * v(LoopId::C) * v(LoopId::FX) * v(LoopId::FY);
    ts_[i][(int)Tensor::O] =
        v(LoopId::B) * v(LoopId::K) * v(LoopId::X) * v(LoopId::Y);
  }

  // Trip products and per-tensor key counts above each level.
  tt_above_[M_ - 1] = 1;
  for (int t = 0; t < 3; ++t) idx_above_[M_ - 1][t] = 1;
  for (int i = M_ - 2; i >= 0; --i) {
    int64_t lp = 1;
    for (int l = 0; l < kNumLoops; ++l) lp *= trips_[i + 1][l];
    tt_above_[i] = tt_above_[i + 1] * lp;
    for (int t = 0; t < 3; ++t) {
      int64_t ip = 1;
      for (int l = 0; l < kNumLoops; ++l)
        if (loop_indexes_tensor((LoopId)l, (Tensor)t)) ip *= trips_[i + 1][l];
      idx_above_[i][t] = idx_above_[i + 1][t] * ip;
    }
  }

  // Free suffix: the product of innermost consecutive non-indexing trips in
  // the nest above a level. A level whose non-unit loops all avoid the
  // tensor passes the run through to the next level out.
  for (int i = 0; i < M_; ++i) {
    for (int t = 0; t < 3; ++t) {
      int64_t fsv = 1;
      bool open = true;
      for (int j = i + 1; j < M_ && open; ++j) {
        for (int oi = kNumLoops - 1; oi >= 0; --oi) {
          LoopId l = s.levels[j].order[oi];
          if (trips_[j][(int)l] <= 1) continue;
          if (loop_indexes_tensor(l, (Tensor)t)) {
            open = false;
            break;
          }
          fsv *= trips_[j][(int)l];
        }
      }
      fs_[i][t] = fsv;
      refills_[i][t] = (i < M_ - 1) ? tt_above_[i] / fsv : 0;
    }
  }

  for (int t = 0; t < 3; ++t) {
    dk_[t] = 1;
    for (const auto* side : {&s.dataflow.vertical, &s.dataflow.horizontal})
      for (const auto& u : *side)
        if (loop_indexes_tensor(u.loop, (Tensor)t)) dk_[t] *= u.factor;
    int64_t ch_v = chain_hops_dim(s.dataflow.vertical, (Tensor)t);
    int64_t ch_h = chain_hops_dim(s.dataflow.horizontal, (Tensor)t);
    int64_t gv = group_positions_dim(s.dataflow.vertical, (Tensor)t);
    chain_[t] = ch_v + gv * ch_h;
  }

  for (int i = 0; i < M_; ++i)
    for (int t = 0; t < 3; ++t) reads_[i][t] = writes_[i][t] = 0;
  hops_ = 0;

  auto mult = [&](int i) { return i < p_ ? npes_ : (int64_t)1; };
  auto fill_collapse = [&](int i, int t) {
    if (i == p_ - 1) return dk_[t];
    return i < p_ - 1 ? npes_ : (int64_t)1;
  };
  const bool fabric = p_ >= 1 && npes_ > 1 && has_interpe_;

  // Inputs and weights: fills flow down, every MAC reads the innermost level.
  for (int ti = 0; ti < 2; ++ti) {
    reads_[0][ti] += macs_;
    for (int i = 1; i < M_; ++i)
      reads_[i][ti] += refills_[i - 1][ti] * ts_[i - 1][ti] *
                       fill_collapse(i - 1, ti);
    for (int i = 0; i < M_ - 1; ++i)
      writes_[i][ti] += refills_[i][ti] * ts_[i][ti] * mult(i);
    if (fabric)
      hops_ += refills_[p_ - 1][ti] * ts_[p_ - 1][ti] * dk_[ti] * chain_[ti];
  }

  // Outputs: accumulate innermost, drain outward at residency end, restore
  // from the parent on revisits. The first accumulation of a fresh tile
  // skips the read.
  const int O = (int)Tensor::O;
  if (M_ == 1) {
    writes_[0][O] += macs_;
    reads_[0][O] += macs_ - ts_[0][O];
    o_child_acc_[0] = writes_[0][O] + reads_[0][O];
  } else {
    int64_t r0 = refills_[0][O], d0 = idx_above_[0][O];
    int64_t fresh0;
    if (p_ == 0)
      fresh0 = d0;
    else if (p_ == 1)
      fresh0 = d0 * npes_ + (r0 - d0) * (npes_ - dk_[O]);
    else
      fresh0 = d0 * npes_;
    writes_[0][O] += macs_;
    reads_[0][O] += macs_ - fresh0 * ts_[0][O];
    o_child_acc_[0] = macs_ + macs_ - fresh0 * ts_[0][O];
    for (int i = 1; i < M_; ++i) o_child_acc_[i] = 0;

    for (int i = 0; i < M_ - 1; ++i) {
      int64_t ri = refills_[i][O], di = idx_above_[i][O];
      // Drain: each holder reads its partial tile out.
      reads_[i][O] += ri * ts_[i][O] * mult(i);
      int64_t drains_in;
      if (i == p_ - 1 && npes_ > 1 && !has_interpe_) {
        // No fabric: every PE drains to the parent, which merges in place.
        drains_in = ri * ts_[i][O] * npes_;
        int64_t merge_reads = ri * ts_[i][O] * (npes_ - dk_[O]);
        reads_[i + 1][O] += merge_reads;
        o_child_acc_[i + 1] += merge_reads;
      } else {
        drains_in = ri * ts_[i][O] * fill_collapse(i, O);
      }
      writes_[i + 1][O] += drains_in;
      o_child_acc_[i + 1] += drains_in;
      // Restores on revisit; spatially reduced tiles return to one
      // representative PE per group.
      int64_t rest = (i == p_ - 1 && npes_ > 1) ? (ri - di) * dk_[O]
                     : (i < p_ - 1)             ? (ri - di) * npes_
                                                : (ri - di);
      writes_[i][O] += rest * ts_[i][O];
      reads_[i + 1][O] += rest * ts_[i][O];
      o_child_acc_[i + 1] += rest * ts_[i][O];
    }
    if (fabric)
      hops_ += refills_[p_ - 1][O] * ts_[p_ - 1][O] * dk_[O] * chain_[O];
  }

  // Energy.
  total_energy_ = 0.0;
  for (int i = 0; i < M_; ++i) {
    double e = energy_per_access(arch.table, storage[i].kind,
                                 storage[i].size_bytes);
    int64_t acc = 0;
    for (int t = 0; t < 3; ++t) acc += reads_[i][t] + writes_[i][t];
    energy_by_storage_[i] = (double)acc * e;
    total_energy_ += energy_by_storage_[i];
  }
  hop_energy_ = (double)hops_ * arch.table.hop_pj;
  mac_energy_ = (double)macs_ * arch.table.mac_pj;
  total_energy_ += hop_energy_ + mac_energy_;

  // Utilization: per unrolled loop, true iterations averaged over the
  // temporal steps covering them, relative to the physical array.
  {
    double active = 1.0;
    for (const auto* side : {&s.dataflow.vertical, &s.dataflow.horizontal})
      for (const auto& u : *side) {
        int64_t tb = 1;
        for (int i = 0; i < M_; ++i) tb *= trips_[i][(int)u.loop];
        active *= (double)layer.bound(u.loop) / (double)tb;
      }
    utilization_ = active / (double)(arch.rows * arch.cols);
  }

  // Runtime: one MAC per PE per cycle over the padded temporal steps;
  // double buffering overlaps transfers, so the slowest side wins.
  compute_cycles_ = 1;
  for (int i = 0; i < M_; ++i)
    for (int l = 0; l < kNumLoops; ++l) compute_cycles_ *= trips_[i][l];
  for (int a = 0; a <= num_arch_levels_; ++a) transfer_cycles_[a] = 0;
  for (int i = 0; i < M_; ++i) {
    double bw = storage[i].bandwidth;
    if (bw <= 0) continue;
    int64_t acc = 0;
    for (int t = 0; t < 3; ++t) acc += reads_[i][t] + writes_[i][t];
    acc /= mult(i);  // private levels move data on per-PE ports in parallel
    transfer_cycles_[storage_arch_index_[i]] =
        (int64_t)std::ceil((double)acc / bw);
  }
  if (interpe_arch_index_ >= 0) {
    double bw = arch.levels[interpe_arch_index_].bandwidth;
    if (bw > 0)
      transfer_cycles_[interpe_arch_index_] =
          (int64_t)std::ceil((double)hops_ / bw);
  }
  runtime_cycles_ = compute_cycles_;
  bound_ = BoundKind::Compute;
  bound_level_ = -1;
  for (int a = 0; a < num_arch_levels_; ++a)
    if (transfer_cycles_[a] > runtime_cycles_ ||
        (bound_ == BoundKind::Memory && transfer_cycles_[a] >= runtime_cycles_)) {
      runtime_cycles_ = transfer_cycles_[a];
      bound_ = BoundKind::Memory;
      bound_level_ = a;
    }
}

AccessCounts CostWorkspace::counts() const {
  AccessCounts c;
  c.levels.resize(M_);
  for (int i = 0; i < M_; ++i)
    for (int t = 0; t < 3; ++t)
      c.levels[i][t] = {reads_[i][t], writes_[i][t]};
  c.interpe_hops = hops_;
  return c;
}

CostReport CostWorkspace::report(const ArchSpec& arch) const {
  CostReport r;
  r.counts = counts();
  r.energy_by_level.assign(num_arch_levels_, 0.0);
  for (int i = 0; i < M_; ++i)
    r.energy_by_level[storage_arch_index_[i]] = energy_by_storage_[i];
  if (interpe_arch_index_ >= 0)
    r.energy_by_level[interpe_arch_index_] = hop_energy_;
  r.mac_energy = mac_energy_;
  r.total_energy = 0.0;
  for (double e : r.energy_by_level) r.total_energy += e;
  r.total_energy += r.mac_energy;
  r.utilization = utilization_;
  r.compute_cycles = compute_cycles_;
  r.transfer_cycles.assign(transfer_cycles_,
                           transfer_cycles_ + num_arch_levels_);
  r.runtime_cycles = runtime_cycles_;
  r.bound = bound_;
  r.bound_level = bound_level_;
  (void)arch;
  return r;
}

AccessCounts access_counts(const LayerShape& layer, const Schedule& s,
                           const ArchSpec& arch) {
  CostWorkspace w;
  w.compute(layer, s, arch);
  return w.counts();
}

CostReport energy(const LayerShape& layer, const Schedule& s,
                  const ArchSpec& arch) {
  CostWorkspace w;
  w.compute(layer, s, arch);
  return w.report(arch);
}

ReuseFactors reuse_factors(const LayerShape& layer, const Schedule& s,
                           const ArchSpec& arch) {
  CostWorkspace w;
  w.compute(layer, s, arch);
  ReuseFactors rf;
  rf.rt.resize(w.M_);
  for (int i = 0; i < w.M_; ++i) {
    for (int t = 0; t < 2; ++t) {
      int64_t residencies = i < w.M_ - 1 ? w.refills_[i][t] : 1;
      rf.rt[i][t] = (double)w.reads_[i][t] /
                    ((double)residencies * (double)w.ts_[i][t]);
    }
    int64_t residencies = i < w.M_ - 1 ? w.refills_[i][(int)Tensor::O] : 1;
    rf.rt[i][(int)Tensor::O] =
        (double)w.o_child_acc_[i] /
        ((double)residencies * (double)w.ts_[i][(int)Tensor::O]);
  }
  return rf;
}

double utilization(const LayerShape& layer, const Dataflow& df, int64_t rows,
                   int64_t cols) {
  double active = 1.0;
  for (const auto* side : {&df.vertical, &df.horizontal})
    for (const auto& u : *side) {
      int64_t b = layer.bound(u.loop);
      int64_t tb = (b + u.factor - 1) / u.factor;
      active *= (double)b / (double)tb;
    }
  return active / (double)(rows * cols);
}

std::pair<int64_t, BoundKind> runtime(const LayerShape& layer,
                                      const Schedule& s,
                                      const ArchSpec& arch) {
  CostWorkspace w;
  w.compute(layer, s, arch);
  return {w.runtime_cycles(), w.report(arch).bound};
}

namespace {

std::string size_str(int64_t bytes) {
  if (bytes < 0) return "-";
  if (bytes >= 1024 * 1024 && bytes % (1024 * 1024) == 0)
    return std::to_string(bytes / (1024 * 1024)) + " MB";
  if (bytes >= 1024 && bytes % 1024 == 0)
    return std::to_string(bytes / 1024) + " KB";
  return std::to_string(bytes) + " B";
}

}  // namespace

std::string report_table(const CostReport& r, const ArchSpec& arch,
                         const std::string& title) {
  std::ostringstream out;
  if (!title.empty()) out << title << '\n';
  out << std::left << std::setw(6) << "level" << std::setw(9) << "kind"
      << std::setw(10) << "size" << std::right << std::setw(14) << "I.rd"
      << std::setw(14) << "I.wr" << std::setw(14) << "W.rd" << std::setw(14)
      << "W.wr" << std::setw(14) << "O.rd" << std::setw(14) << "O.wr"
      << std::setw(16) << "energy(pJ)" << '\n';
  int si = 0;
  for (int a = 0; a < (int)arch.levels.size(); ++a) {
    const auto& lvl = arch.levels[a];
    out << std::left << std::setw(6) << a << std::setw(9)
        << to_string(lvl.kind) << std::setw(10) << size_str(lvl.size_bytes)
        << std::right;
    if (lvl.kind == MemKind::InterPE) {
      out << std::setw(14) << "-" << std::setw(14) << "-" << std::setw(14)
          << "-" << std::setw(14) << "-" << std::setw(14) << "-"
          << std::setw(14) << ("hops=" + std::to_string(r.counts.interpe_hops));
    } else {
      const auto& c = r.counts.levels[si++];
      out << std::setw(14) << c[0].reads << std::setw(14) << c[0].writes
          << std::setw(14) << c[1].reads << std::setw(14) << c[1].writes
          << std::setw(14) << c[2].reads << std::setw(14) << c[2].writes;
    }
    out << std::setw(16) << std::fixed << std::setprecision(1)
        << r.energy_by_level[a] << '\n';
    out.unsetf(std::ios::fixed);
  }
  out << std::setprecision(6);
  out << "mac energy: " << r.mac_energy << " pJ\n";
  out << "total energy: " << r.total_energy << " pJ\n";
  out << "utilization: " << r.utilization << '\n';
  out << "runtime: " << r.runtime_cycles << " cycles ("
      << (r.bound == BoundKind::Compute
              ? std::string("compute bound")
              : "memory bound at level " + std::to_string(r.bound_level))
      << ")\n";
  return out.str();
}

std::string report_flat(const CostReport& r, const ArchSpec& arch,
                        const std::string& prefix) {
  std::ostringstream out;
  out << std::setprecision(15);
  auto key = [&](const std::string& k) -> std::ostringstream& {
    if (!prefix.empty()) out << prefix << '.';
    out << k;
    return out;
  };
  int si = 0;
  for (int a = 0; a < (int)arch.levels.size(); ++a) {
    const auto& lvl = arch.levels[a];
    std::string base = "level" + std::to_string(a);
    key(base + ".kind") << '=' << to_string(lvl.kind) << '\n';
    if (lvl.kind == MemKind::InterPE) {
      key(base + ".hops") << '=' << r.counts.interpe_hops << '\n';
    } else {
      const auto& c = r.counts.levels[si++];
      for (int t = 0; t < 3; ++t) {
        key(base + ".reads." + to_string((Tensor)t)) << '=' << c[t].reads
                                                     << '\n';
        key(base + ".writes." + to_string((Tensor)t)) << '=' << c[t].writes
                                                      << '\n';
      }
    }
    key(base + ".energy_pj") << '=' << r.energy_by_level[a] << '\n';
  }
  key("mac.energy_pj") << '=' << r.mac_energy << '\n';
  key("total.energy_pj") << '=' << r.total_energy << '\n';
  key("utilization") << '=' << r.utilization << '\n';
  key("runtime.cycles") << '=' << r.runtime_cycles << '\n';
  key("bound") << '='
               << (r.bound == BoundKind::Compute
                       ? std::string("compute")
                       : "level" + std::to_string(r.bound_level))
               << '\n';
  return out.str();
}

}  // namespace nest
