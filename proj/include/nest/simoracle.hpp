#pragma once

#include <cstdint>
#include <vector>

#include "nest/costmodel.hpp"
#include "nest/schedule.hpp"
#include "nest/workload.hpp"

namespace nest {

// Exact per-level access counts measured by walking the transformed nest.
using TraceCounts = AccessCounts;

// Dense integer tensors in the layouts
//   I[b][c][x + fx][y + fy]   extents B, C, X+FX-1, Y+FY-1
//   W[k][c][fx][fy]           extents K, C, FX, FY
//   O[b][k][x][y]             extents B, K, X, Y
// stored row-major as flat vectors.
std::vector<int64_t> make_inputs(const LayerShape& layer, uint64_t seed);
std::vector<int64_t> make_weights(const LayerShape& layer, uint64_t seed);

// Plain seven-loop convolution, integer arithmetic, returns O.
std::vector<int64_t> reference_conv(const LayerShape& layer,
                                    const std::vector<int64_t>& input,
                                    const std::vector<int64_t>& weights);

struct SimResult {
  std::vector<int64_t> output;  // O layout, true extents
  TraceCounts counts;
};

// Walks the blocked and spatially unrolled nest level by level, copying
// tiles into modeled buffers and counting every access, then checks out the
// computed output. Throws std::runtime_error when the padded MAC count
// exceeds the cap or the schedule does not fit the hierarchy.
SimResult execute_scheduled(const LayerShape& layer, const Schedule& s,
                            const ArchSpec& arch,
                            const std::vector<int64_t>& input,
                            const std::vector<int64_t>& weights,
                            int64_t mac_cap = 10'000'000);

// execute_scheduled without materialized data; counts only.
TraceCounts simulate(const LayerShape& layer, const Schedule& s,
                     const ArchSpec& arch, int64_t mac_cap = 100'000'000);

}  // namespace nest
