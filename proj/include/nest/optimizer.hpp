#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nest/costmodel.hpp"
#include "nest/schedule.hpp"
#include "nest/workload.hpp"

namespace nest {

enum class Objective { Energy, EnergyDelayProduct };

struct BudgetExceeded : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct SearchResult {
  Schedule schedule;
  CostReport report;
  double objective_value = 0.0;
};

// Minimum-objective blocking over the given dataflows. Enumerates every
// tile factorization that fits the hierarchy and, per factorization, the
// cost-distinct loop orders (one canonical representative per reuse
// signature; order families with identical access counts collapse to one
// candidate, so the minimum matches full enumeration). Returns nullopt when
// nothing fits; throws BudgetExceeded past `budget` evaluations.
// An empty dataflow list falls back to the no-unrolling mapping.
std::optional<SearchResult> exhaustive_search(
    const LayerShape& layer, const ArchSpec& arch,
    const std::vector<Dataflow>& dataflows,
    Objective obj = Objective::Energy, int64_t budget = 500'000'000,
    double min_utilization = 0.0);

// Visits the energy of every candidate the blocking search would evaluate
// for one dataflow (capacity-feasible factorizations x cost-distinct loop
// orders). For studying the blocking-space energy distribution.
void scan_blocking_energies(const LayerShape& layer, const ArchSpec& arch,
                            const Dataflow& df,
                            const std::function<void(double)>& fn,
                            int64_t budget = 500'000'000);

struct SearchConstraints {
  std::vector<std::pair<int64_t, int64_t>> arrays = {{16, 16}};
  std::vector<int64_t> rf_sizes;    // bytes per PE
  std::vector<int64_t> rf2_sizes;   // optional second RF level; 0 = absent
  std::vector<int64_t> sram_sizes;  // shared buffer bytes
  double rf_bw = -1.0, rf2_bw = -1.0, interpe_bw = -1.0, sram_bw = -1.0,
         dram_bw = 4.0;
  EnergyTable table = default_energy_table();
  Objective objective = Objective::Energy;
  double min_utilization = 0.0;
  int64_t budget = 500'000'000;
  double ratio_lo = 4.0, ratio_hi = 16.0;  // adjacent on-chip total-size rule
  int jobs = 1;
};

SearchConstraints parse_constraints(const std::string& text);
SearchConstraints load_constraints(const std::string& path);

struct DesignPoint {
  ArchSpec arch;
  std::vector<std::pair<std::string, Schedule>> schedules;  // per layer
  std::vector<CostReport> reports;                          // per layer
  double total_energy = 0.0;     // network aggregate, pJ
  double dram_elided_pj = 0.0;   // activation traffic kept on chip
  int64_t total_runtime = 0;     // summed cycles
  double objective_value = 0.0;
  int64_t onchip_bytes = 0;      // total capacity across the chip
};

struct SearchOutcome {
  std::optional<DesignPoint> best;
  std::string no_solution;  // binding constraint when best is empty
  int64_t candidates_tried = 0;
};

// C|K-primary dataflows (with replication variants) for one layer; falls
// back to the plain single-loop set when the layer cannot map C|K.
std::vector<Dataflow> ck_dataflows(const LayerShape& layer, int64_t rows,
                                   int64_t cols);

ArchSpec build_arch(int64_t rows, int64_t cols, int64_t rf_bytes,
                    int64_t rf2_bytes, int64_t sram_bytes,
                    const SearchConstraints& c);

// Fixes the dataflow to C|K, keeps only hierarchies whose adjacent on-chip
// total sizes stay within [ratio_lo, ratio_hi], finds per-layer best
// blockings for each survivor, and returns the minimum-objective design.
SearchOutcome pruned_search(const Network& net, const SearchConstraints& c);

// pruned_search once per array size, ascending.
std::vector<std::pair<std::pair<int64_t, int64_t>, SearchOutcome>>
sweep_pe_array(const Network& net, const SearchConstraints& c);

// Network aggregate used by pruned_search: per-layer energies summed; when
// a layer and its predecessor both fit the outermost on-chip level, the
// boundary activations stay on chip and their DRAM energy is elided.
std::pair<double, double> aggregate_network_energy(
    const Network& net, const ArchSpec& arch,
    const std::vector<CostReport>& reports);

}  // namespace nest
