#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <random>

#include "doctest.h"
#include "nest/simoracle.hpp"

using namespace nest;

namespace {

ArchSpec dram_only() {
  ArchSpec a;
  a.rows = a.cols = 1;
  a.levels = {{MemKind::DRAM, -1, 4.0}};
  return a;
}

ArchSpec rf_dram(int64_t rf = 4096) {
  ArchSpec a;
  a.rows = a.cols = 1;
  a.levels = {{MemKind::RF, rf, -1.0}, {MemKind::DRAM, -1, 4.0}};
  return a;
}

Schedule outer_all(const LayerShape& l, int levels) {
  Schedule s;
  s.levels.assign(levels, BlockingLevel{});
  for (LoopId lp : kAllLoops)
    s.levels[levels - 1].factors[(int)lp] = l.bound(lp);
  return s;
}

// Independent second implementation: accumulate over output-major loops
// with explicit bounds checks, no shared helpers.
std::vector<int64_t> conv_by_hand(const LayerShape& l,
                                  const std::vector<int64_t>& in,
                                  const std::vector<int64_t>& w) {
  std::vector<int64_t> out((size_t)(l.b * l.k * l.x * l.y), 0);
  int64_t xw = l.x + l.fx - 1, yw = l.y + l.fy - 1;
  for (int64_t idx = 0; idx < (int64_t)out.size(); ++idx) {
    int64_t y = idx % l.y, x = (idx / l.y) % l.x, k = (idx / l.y / l.x) % l.k,
            b = idx / l.y / l.x / l.k;
    int64_t acc = 0;
    for (int64_t c = 0; c < l.c; ++c)
      for (int64_t fy = 0; fy < l.fy; ++fy)
        for (int64_t fx = 0; fx < l.fx; ++fx)
          acc += in[((b * l.c + c) * xw + x + fx) * yw + y + fy] *
                 w[((k * l.c + c) * l.fx + fx) * l.fy + fy];
    out[idx] = acc;
  }
  return out;
}

std::vector<int64_t> ones(int64_t n) { return std::vector<int64_t>(n, 1); }

}  // namespace

TEST_CASE("reference_conv basics") {
  LayerShape one = make_conv(1, 1, 1, 1, 1, 1, 1);
  CHECK(reference_conv(one, ones(1), ones(1)) == std::vector<int64_t>{1});

  // 1x1 filter with one channel is an elementwise product.
  LayerShape pw = make_conv(1, 1, 1, 3, 3, 1, 1);
  auto in = make_inputs(pw, 42);
  auto w = make_weights(pw, 42);
  auto out = reference_conv(pw, in, w);
  for (size_t i = 0; i < out.size(); ++i) CHECK(out[i] == in[i] * w[0]);

  CHECK_THROWS_AS(reference_conv(pw, ones(3), ones(1)),
                  std::invalid_argument);
}

TEST_CASE("reference_conv equals an independently coded loop sum") {
  std::mt19937_64 rng(9);
  for (int i = 0; i < 20; ++i) {
    LayerShape l = make_conv(1 + rng() % 2, 1 + rng() % 4, 1 + rng() % 4,
                             1 + rng() % 4, 1 + rng() % 4, 1 + rng() % 3,
                             1 + rng() % 3);
    auto in = make_inputs(l, 100 + i);
    auto w = make_weights(l, 200 + i);
    CHECK(reference_conv(l, in, w) == conv_by_hand(l, in, w));
  }
}

TEST_CASE("all-ones layer on DRAM only: one read per operand, one write") {
  LayerShape one = make_conv(1, 1, 1, 1, 1, 1, 1);
  Schedule s;
  s.levels.assign(1, BlockingLevel{});
  auto r = execute_scheduled(one, s, dram_only(), ones(1), ones(1));
  CHECK(r.output == std::vector<int64_t>{1});
  CHECK(r.counts.levels[0][(int)Tensor::I].reads == 1);
  CHECK(r.counts.levels[0][(int)Tensor::W].reads == 1);
  CHECK(r.counts.levels[0][(int)Tensor::O].writes == 1);
  CHECK(r.counts.levels[0][(int)Tensor::O].reads == 0);
  CHECK(r.counts.interpe_hops == 0);
}

TEST_CASE("halo refetch: overlapping input windows are re-read") {
  // One channel, X=4 split into two tiles of 2 with a 3-wide filter: each
  // tile needs a 4-element window, and the 2-element overlap is fetched
  // twice, so DRAM input reads are 8 over a 6-element footprint.
  LayerShape l = make_conv(1, 1, 1, 4, 1, 3, 1);
  Schedule s;
  s.levels.assign(2, BlockingLevel{});
  s.levels[0].factors[(int)LoopId::X] = 2;
  s.levels[0].factors[(int)LoopId::FX] = 3;
  s.levels[1].factors[(int)LoopId::X] = 2;
  auto in = make_inputs(l, 5);
  auto w = make_weights(l, 6);
  auto r = execute_scheduled(l, s, rf_dram(), in, w);
  CHECK(r.output == reference_conv(l, in, w));
  CHECK(footprint(l, Tensor::I) == 6);
  CHECK(r.counts.levels[1][(int)Tensor::I].reads == 8);
  CHECK(r.counts.levels[0][(int)Tensor::I].writes == 8);
  CHECK(r.counts.levels[0][(int)Tensor::I].reads == 12);  // one per MAC
  // Weights are fetched once (X does not index them).
  CHECK(r.counts.levels[1][(int)Tensor::W].reads == 3);
  // Outputs: 3 accumulations each, first one write-only; 2 drains of 2.
  CHECK(r.counts.levels[0][(int)Tensor::O].writes == 12);
  CHECK(r.counts.levels[0][(int)Tensor::O].reads == 8 + 4);
  CHECK(r.counts.levels[1][(int)Tensor::O].writes == 4);
}

TEST_CASE("ordered replication: cross-group transfers cost a group stride") {
  // Two groups of four PEs on a 1D array, dataflow C then K. Inputs hop
  // across groups (4 hops per transfer), outputs merge within a group
  // (3 adjacent transfers); weights stay put.
  LayerShape l = make_conv(1, 2, 4, 2, 1, 1, 1);
  ArchSpec a;
  a.rows = 8;
  a.cols = 1;
  a.levels = {{MemKind::RF, 64, -1.0},
              {MemKind::InterPE, -1, -1.0},
              {MemKind::SRAM, 1 << 16, -1.0},
              {MemKind::DRAM, -1, 4.0}};
  Schedule s;
  s.levels.assign(3, BlockingLevel{});
  s.dataflow.vertical.push_back({LoopId::C, 4});
  s.dataflow.vertical.push_back({LoopId::K, 2});
  s.levels[1].factors[(int)LoopId::X] = 2;
  REQUIRE(validate_schedule(l, s, a).empty());

  auto counts = simulate(l, s, a);
  // Inputs: 2 refills x 4 distinct values x one 4-hop transfer each = 32.
  // Outputs: 2 drains x 2 distinct outputs x 3 one-hop merges = 12.
  CHECK(counts.interpe_hops == 32 + 12);
  // One SRAM fetch per distinct value: 4 per input refill, weights once
  // per PE-distinct value (8), merged outputs written once per output.
  CHECK(counts.levels[1][(int)Tensor::I].reads == 8);
  CHECK(counts.levels[1][(int)Tensor::W].reads == 8);
  CHECK(counts.levels[1][(int)Tensor::O].writes == 4);

  auto r = execute_scheduled(l, s, a, make_inputs(l, 1), make_weights(l, 2));
  CHECK(r.output == reference_conv(l, make_inputs(l, 1), make_weights(l, 2)));
  CHECK(r.counts == counts);
}

TEST_CASE("output equals reference for every schedule of a small layer") {
  LayerShape l = make_conv(1, 2, 2, 3, 2, 2, 1);
  ArchSpec a = rf_dram(1 << 12);
  auto in = make_inputs(l, 77);
  auto w = make_weights(l, 78);
  auto want = reference_conv(l, in, w);
  int64_t n = 0;
  enumerate_blockings(l, Schedule{}, a, [&](const Schedule& s) {
    auto r = execute_scheduled(l, s, a, in, w);
    CHECK(r.output == want);
    return ++n < 400;
  });
  CHECK(n > 100);
}

TEST_CASE("simulate matches execute_scheduled counts") {
  std::mt19937_64 rng(31);
  LayerShape l = make_conv(2, 3, 2, 3, 2, 2, 2);
  ArchSpec a;
  a.rows = 2;
  a.cols = 2;
  a.levels = {{MemKind::RF, 1 << 10, -1.0},
              {MemKind::InterPE, -1, -1.0},
              {MemKind::SRAM, 1 << 18, -1.0},
              {MemKind::DRAM, -1, 4.0}};
  auto in = make_inputs(l, 3);
  auto w = make_weights(l, 4);
  auto dfs = enumerate_dataflows(l, a.rows, a.cols, true);
  for (int i = 0; i < 25; ++i) {
    Schedule s;
    s.dataflow = dfs[rng() % dfs.size()];
    s.levels.assign(3, BlockingLevel{});
    std::array<int64_t, kNumLoops> spatial{1, 1, 1, 1, 1, 1, 1};
    for (const auto* side : {&s.dataflow.vertical, &s.dataflow.horizontal})
      for (const auto& u : *side) spatial[(int)u.loop] *= u.factor;
    for (int lp = 0; lp < kNumLoops; ++lp) {
      int64_t rem = (l.bound((LoopId)lp) + spatial[lp] - 1) / spatial[lp];
      for (int lvl = 0; lvl < 2; ++lvl) {
        std::vector<int64_t> divs;
        for (int64_t d = 1; d <= rem; ++d)
          if (rem % d == 0) divs.push_back(d);
        int64_t pick = divs[rng() % divs.size()];
        s.levels[lvl].factors[lp] = pick;
        rem /= pick;
      }
      s.levels[2].factors[lp] = rem;
    }
    for (auto& lvl : s.levels) {
      auto ord = kAllLoops;
      std::shuffle(ord.begin(), ord.end(), rng);
      lvl.order = ord;
    }
    if (!validate_schedule(l, s, a).empty()) continue;
    auto r = execute_scheduled(l, s, a, in, w);
    CHECK(r.counts == simulate(l, s, a));
    CHECK(r.output == reference_conv(l, in, w));
  }
}

TEST_CASE("simulation cap refuses oversized problems") {
  LayerShape big = make_conv(64, 64, 64, 64, 64, 3, 3);
  Schedule s = outer_all(big, 1);
  CHECK_THROWS_AS(simulate(big, s, dram_only()), std::runtime_error);
}
