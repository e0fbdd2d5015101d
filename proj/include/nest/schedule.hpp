#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nest/arch.hpp"
#include "nest/workload.hpp"

namespace nest {

// One spatially unrolled loop. Within a physical dimension the list order is
// significant: the leftmost loop maps to adjacent PEs (shortest wires), the
// second loop strides across groups of the first.
struct SpatialUnroll {
  LoopId loop = LoopId::B;
  int64_t factor = 1;

  bool operator==(const SpatialUnroll&) const = default;
};

struct Dataflow {
  std::vector<SpatialUnroll> vertical;    // rows dimension, up to 2 loops
  std::vector<SpatialUnroll> horizontal;  // cols dimension, up to 2 loops

  bool empty() const { return vertical.empty() && horizontal.empty(); }
  int64_t factor(LoopId l) const;  // 1 when l is not unrolled
  int64_t pe_positions() const;    // product of all unroll factors

  bool operator==(const Dataflow&) const = default;
};

std::string to_string(const Dataflow& df);

// Tile factors and loop order for one storage level. order runs outermost to
// innermost within the level and is always a permutation of all 7 loops;
// factors of 1 make a loop inert at this level.
struct BlockingLevel {
  std::array<int64_t, kNumLoops> factors{1, 1, 1, 1, 1, 1, 1};
  std::array<LoopId, kNumLoops> order = kAllLoops;

  int64_t factor(LoopId l) const { return factors[(int)l]; }
  bool operator==(const BlockingLevel&) const = default;
};

// A full mapping: spatial unrolling plus one blocking level per storage
// level of the target hierarchy, innermost (RF) first, DRAM last.
struct Schedule {
  Dataflow dataflow;
  std::vector<BlockingLevel> levels;

  bool operator==(const Schedule&) const = default;
};

// Derived iteration geometry of (layer, schedule, arch). All counting runs
// over the ceiling-padded loop space: each bound is padded up to
// spatial * prod(tile factors), and edge tiles execute on zero data.
struct NestGeometry {
  int num_levels = 0;            // storage levels, innermost first
  int pe_boundary = 0;           // levels below the array boundary (per PE)
  int64_t pe_positions = 1;      // product of spatial factors
  std::array<int64_t, kNumLoops> spatial{1, 1, 1, 1, 1, 1, 1};
  std::vector<std::array<int64_t, kNumLoops>> trips;  // per level
  std::vector<std::array<int64_t, kNumLoops>> ext;    // cumulative extents
  std::array<int64_t, kNumLoops> padded{};            // padded loop bounds

  static NestGeometry build(const LayerShape& layer, const Schedule& s,
                            const ArchSpec& arch);

  // Elements of one tensor tile resident at a level (per PE below the
  // boundary). Input tiles include the filter halo.
  int64_t tile_elems(int level, Tensor t) const;
  int64_t tile_bytes(int level, Tensor t) const {
    return tile_elems(level, t) * ArchSpec::word_bytes;
  }
  int64_t level_trips(int level) const;  // product of one level's trips
  int64_t padded_macs() const;           // product of padded bounds
};

struct ScheduleViolation {
  int level = -1;                 // schedule/storage level, -1 when global
  std::optional<Tensor> tensor;
  int64_t required = 0;           // bytes (capacity) or count (coverage)
  int64_t available = 0;
  std::string what;
};

std::string to_string(const ScheduleViolation& v);

// Checks loop-bound coverage, per-level working-set capacity (SRAM levels
// get half capacity for double buffering, RF levels full capacity), and
// that dataflow unroll products fit the PE array.
std::vector<ScheduleViolation> validate_schedule(const LayerShape& layer,
                                                 const Schedule& s,
                                                 const ArchSpec& arch);

// All spatial unrolling choices for a layer on a 1D/2D array. Without
// replication this is exactly binom(L, d) where L counts loop bounds > 1
// and d the array dimensions > 1. With replication, ordered two-loop
// assignments per dimension are added when the secondary factor is > 1.
std::vector<Dataflow> enumerate_dataflows(const LayerShape& layer,
                                          int64_t rows, int64_t cols,
                                          bool allow_replication);

// Assigns concrete unroll factors: the leftmost loop takes min(bound, dim)
// and a second loop fills remaining slack without exceeding the dimension.
Dataflow replication_factors(const Dataflow& df, const LayerShape& layer,
                             int64_t rows, int64_t cols);

// Yields every schedule with the skeleton's dataflow whose per-level tile
// factors are ordered factorizations of the spatially-reduced, ceiling-
// padded bounds and whose per-level orders are canonical representatives
// (permutations of the non-unit loops, unit loops in fixed trailing order).
// Every yielded schedule passes validate_schedule. Return false from the
// visitor to stop.
void enumerate_blockings(const LayerShape& layer, const Schedule& skeleton,
                         const ArchSpec& arch,
                         const std::function<bool(const Schedule&)>& visit);

// Convenience: materialize up to `cap` schedules (0 = no cap).
std::vector<Schedule> list_blockings(const LayerShape& layer,
                                     const Schedule& skeleton,
                                     const ArchSpec& arch, size_t cap = 0);

// Moves unit-factor loops to a fixed trailing position at every level, so
// schedules differing only in inert loop placement compare equal.
Schedule canonicalize(const Schedule& s);
std::string canonical_key(const Schedule& s);

// Schedule file format:
//   dataflow vert=<Loop[:factor]>[,<Loop[:factor]>] horiz=<...>
//   level <i> order=<L1,...,L7> factors=<B=n,K=n,...>
// Omitted factors default to 1; a missing dataflow line means none.
Schedule parse_schedule(const std::string& text);
Schedule load_schedule(const std::string& path);
std::string to_text(const Schedule& s);
void save_schedule(const Schedule& s, const std::string& path);

}  // namespace nest
