#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "nest/workload.hpp"

namespace nest {

enum class MemKind { RF, InterPE, SRAM, DRAM };
const char* to_string(MemKind k);

// One level of the memory hierarchy, innermost first. RF levels are private
// to a PE; SRAM levels are shared across the array; the optional InterPE
// pseudo-level marks the array boundary and has no storage of its own.
struct MemLevel {
  MemKind kind = MemKind::DRAM;
  int64_t size_bytes = -1;  // -1 = unbounded (DRAM, or InterPE which has none)
  double bandwidth = -1.0;  // elements/cycle toward the child level; -1 = unbounded

  bool operator==(const MemLevel&) const = default;
};

// Per-access energies. RF entries scale x2 per size doubling and SRAM
// entries x1.5; interpolation between rows is linear in log-log space and
// extrapolation continues the per-kind growth rate.
struct EnergyTable {
  std::vector<std::pair<int64_t, double>> rf;    // size bytes -> pJ
  std::vector<std::pair<int64_t, double>> sram;  // size bytes -> pJ
  double mac_pj = 0.0;
  double hop_pj = 0.0;
  double dram_pj = 0.0;

  bool operator==(const EnergyTable&) const = default;
};

EnergyTable default_energy_table();
EnergyTable load_energy_table(const std::string& path);

struct ArchSpec {
  int64_t rows = 1;
  int64_t cols = 1;
  std::vector<MemLevel> levels;  // innermost first; outermost must be DRAM
  EnergyTable table = default_energy_table();
  static constexpr int64_t word_bytes = 2;  // 16-bit elements throughout

  int64_t pe_count() const { return rows * cols; }

  // Storage levels only (InterPE excluded), innermost first.
  std::vector<MemLevel> storage_levels() const;
  // Number of storage levels below the array boundary (private per PE).
  // The boundary is the InterPE level when present, else the RF/shared split.
  int per_pe_level_count() const;
  bool has_interpe() const;

  bool operator==(const ArchSpec&) const = default;
};

struct ArchViolation {
  int level = -1;  // index into ArchSpec::levels, -1 when global
  std::string what;
};

// Checks kind ordering (RF* [InterPE] SRAM* DRAM), exactly one DRAM level
// outermost, positive on-chip sizes, and sizes monotone non-decreasing
// outward among on-chip storage levels.
std::vector<ArchViolation> validate_arch(const ArchSpec& arch);

// pJ for one 16-bit access of an RF or SRAM of the given size. Exact at
// table rows, geometric interpolation between rows, ratio-continuation
// beyond the table. Throws std::invalid_argument for non-positive sizes.
double energy_per_access(const EnergyTable& t, MemKind kind, int64_t size_bytes);

// pJ to move one element over the given number of nearest-neighbor hops.
double hop_cost(const EnergyTable& t, int64_t distance_hops);

// Per-access energy of an arch level by index (DRAM constant, InterPE = one
// hop, RF/SRAM interpolated).
double level_access_energy(const ArchSpec& arch, int level_index);

// Arch file format:
//   array rows=<n> cols=<n>
//   level <i> kind=<rf|interpe|sram|dram> size=<bytes|unbounded> bw=<n|unbounded>
//   energy mac=<pJ> hop=<pJ> dram=<pJ>
//   table rf <size>=<pJ> ...        (optional; overrides the default table)
//   table sram <size>=<pJ> ...
ArchSpec parse_arch(const std::string& text);
ArchSpec load_arch(const std::string& path);
std::string to_text(const ArchSpec& arch);
void save_arch(const ArchSpec& arch, const std::string& path);

}  // namespace nest
