#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "nest/arch.hpp"
#include "nest/schedule.hpp"
#include "nest/workload.hpp"

namespace nest {

// Per-storage-level, per-tensor access totals, plus the hop-weighted
// transfer count of the inter-PE fabric. Counting runs over the padded
// loop space, so edge tiles contribute like full tiles.
struct AccessCounts {
  struct RW {
    int64_t reads = 0;
    int64_t writes = 0;
    bool operator==(const RW&) const = default;
  };
  std::vector<std::array<RW, 3>> levels;  // storage levels, innermost first
  int64_t interpe_hops = 0;               // element-hops across the array

  bool operator==(const AccessCounts&) const = default;
};

// RT per level and tensor: child-side accesses of the level during one
// tile residency, normalized by the tile size.
struct ReuseFactors {
  std::vector<std::array<double, 3>> rt;
};

enum class BoundKind { Compute, Memory };

struct CostReport {
  AccessCounts counts;
  std::vector<double> energy_by_level;   // per arch level, pJ (hops at interpe)
  double mac_energy = 0.0;               // pJ
  double total_energy = 0.0;             // pJ, == sum(energy_by_level) + mac
  double utilization = 1.0;              // active-PE fraction, (0, 1]
  int64_t compute_cycles = 0;
  std::vector<int64_t> transfer_cycles;  // per arch level (0 if bw unbounded)
  int64_t runtime_cycles = 0;
  BoundKind bound = BoundKind::Compute;
  int bound_level = -1;                  // arch level index when memory bound
};

AccessCounts access_counts(const LayerShape& layer, const Schedule& s,
                           const ArchSpec& arch);
ReuseFactors reuse_factors(const LayerShape& layer, const Schedule& s,
                           const ArchSpec& arch);
CostReport energy(const LayerShape& layer, const Schedule& s,
                  const ArchSpec& arch);

// Active-PE fraction of a dataflow on a rows x cols array, averaged over
// edge tiles under ceiling semantics.
double utilization(const LayerShape& layer, const Dataflow& df, int64_t rows,
                   int64_t cols);

std::pair<int64_t, BoundKind> runtime(const LayerShape& layer,
                                      const Schedule& s, const ArchSpec& arch);

// Reusable evaluator for tight search loops: no per-call allocation.
class CostWorkspace {
 public:
  static constexpr int kMaxLevels = 8;

  // Schedule must already validate; behavior is undefined otherwise.
  void compute(const LayerShape& layer, const Schedule& s,
               const ArchSpec& arch);

  // Split form for search loops: bind the arch once, evaluate many
  // schedules against it without touching the ArchSpec again.
  void bind_arch(const ArchSpec& arch);
  void compute_bound(const LayerShape& layer, const Schedule& s);

  double total_energy() const { return total_energy_; }
  int64_t runtime_cycles() const { return runtime_cycles_; }
  double utilization() const { return utilization_; }
  CostReport report(const ArchSpec& arch) const;
  AccessCounts counts() const;
  int levels() const { return M_; }
  int64_t reads(int level, Tensor t) const {
    return reads_[level][(int)t];
  }
  int64_t writes(int level, Tensor t) const {
    return writes_[level][(int)t];
  }
  int64_t hops() const { return hops_; }

 private:
  int M_ = 0, p_ = 0;
  int64_t npes_ = 1;
  bool has_interpe_ = false;
  // Bound arch data.
  MemKind kind_[kMaxLevels];
  int64_t size_[kMaxLevels];
  double bw_[kMaxLevels];
  double eacc_[kMaxLevels];
  double interpe_bw_ = -1.0;
  double mac_pj_ = 0.0, hop_pj_ = 0.0;
  int64_t rows_ = 1, cols_ = 1;
  int64_t spatial_[kNumLoops];
  int64_t trips_[kMaxLevels][kNumLoops];
  int64_t ext_[kMaxLevels][kNumLoops];
  int64_t ts_[kMaxLevels][3];
  int64_t tt_above_[kMaxLevels];
  int64_t idx_above_[kMaxLevels][3];
  int64_t fs_[kMaxLevels][3];
  int64_t refills_[kMaxLevels][3];
  int64_t dk_[3];
  int64_t chain_[3];
  int64_t macs_ = 0;
  int64_t reads_[kMaxLevels][3];
  int64_t writes_[kMaxLevels][3];
  int64_t o_child_acc_[kMaxLevels];
  int64_t hops_ = 0;
  double energy_by_storage_[kMaxLevels];
  double hop_energy_ = 0.0, mac_energy_ = 0.0, total_energy_ = 0.0;
  double utilization_ = 1.0;
  int64_t compute_cycles_ = 0;
  int64_t transfer_cycles_[kMaxLevels + 1];  // arch levels
  int num_arch_levels_ = 0;
  int interpe_arch_index_ = -1;
  int storage_arch_index_[kMaxLevels];
  int64_t runtime_cycles_ = 0;
  BoundKind bound_ = BoundKind::Compute;
  int bound_level_ = -1;

  friend ReuseFactors reuse_factors(const LayerShape&, const Schedule&,
                                    const ArchSpec&);
};

// Human-readable table and a flat key=value rendering for scripts.
std::string report_table(const CostReport& r, const ArchSpec& arch,
                         const std::string& title);
std::string report_flat(const CostReport& r, const ArchSpec& arch,
                        const std::string& prefix);

}  // namespace nest
