#include "nest/simoracle.hpp"

#include <algorithm>
#include <cassert>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_set>

namespace nest {

std::vector<int64_t> make_inputs(const LayerShape& layer, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int64_t> d(-4, 4);
  std::vector<int64_t> v(footprint(layer, Tensor::I));
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<int64_t> make_weights(const LayerShape& layer, uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ull);
  std::uniform_int_distribution<int64_t> d(-4, 4);
  std::vector<int64_t> v(footprint(layer, Tensor::W));
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<int64_t> reference_conv(const LayerShape& layer,
                                    const std::vector<int64_t>& input,
                                    const std::vector<int64_t>& weights) {
  if ((int64_t)input.size() != footprint(layer, Tensor::I) ||
      (int64_t)weights.size() != footprint(layer, Tensor::W))
    throw std::invalid_argument("reference_conv: tensor extents mismatch");
  const int64_t B = layer.b, K = layer.k, C = layer.c, X = layer.x,
                Y = layer.y, FX = layer.fx, FY = layer.fy;
  const int64_t XW = X + FX - 1, YW = Y + FY - 1;
  std::vector<int64_t> out(B * K * X * Y, 0);
  for (int64_t b = 0; b < B; ++b)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t c = 0; c < C; ++c)
        for (int64_t y = 0; y < Y; ++y)
          for (int64_t x = 0; x < X; ++x)
            for (int64_t fy = 0; fy < FY; ++fy)
              for (int64_t fx = 0; fx < FX; ++fx)
                out[((b * K + k) * X + x) * Y + y] +=
                    input[((b * C + c) * XW + (x + fx)) * YW + (y + fy)] *
                    weights[((k * C + c) * FX + fx) * FY + fy];
  return out;
}

namespace {

constexpr int kB = (int)LoopId::B, kK = (int)LoopId::K, kC = (int)LoopId::C,
              kX = (int)LoopId::X, kY = (int)LoopId::Y, kFX = (int)LoopId::FX,
              kFY = (int)LoopId::FY;

struct Walker {
  const LayerShape& layer;
  const Schedule& sched;
  const ArchSpec& arch;
  bool with_data;

  int M = 0, p = 0;
  int64_t npes = 1;
  bool has_interpe = false;
  std::array<int64_t, 7> S{1, 1, 1, 1, 1, 1, 1};   // spatial factor per loop
  std::array<int64_t, 7> ppe{1, 1, 1, 1, 1, 1, 1}; // per-PE extents below boundary
  std::vector<std::array<int64_t, 7>> trips, ext;
  std::array<int64_t, 7> padded{};

  struct TLoop {
    int level;
    int loop;
    int64_t trip;
    int64_t below;  // global coordinate step of one iteration
  };
  std::vector<TLoop> nest;     // outermost first
  std::vector<int64_t> idx;    // current index per nest entry

  std::vector<std::array<int64_t, 7>> sp;  // spatial index per loop, per PE
  std::vector<int64_t> iv_of, ih_of;       // flat dim positions per PE

  // Composed temporal tile index above each level, per loop.
  std::vector<std::array<int64_t, 7>> blk;

  struct Buf {
    std::vector<int64_t> vals;
    std::vector<uint8_t> touched;     // output freshness, level 0 only
    std::array<int64_t, 4> base{};    // tensor-dim base coords
    std::array<int64_t, 4> dims{};
  };
  // bufs[level][tensor]: one entry for shared levels, npes for private ones.
  std::vector<std::array<std::vector<Buf>, 3>> bufs;
  std::vector<std::array<std::array<int64_t, 7>, 3>> resident;
  std::vector<std::array<bool, 3>> resident_valid;
  std::vector<std::unordered_set<int64_t>> seen_o;
  std::vector<std::array<int64_t, 7>> blk_range;

  std::vector<int64_t> gI, gW, gO;
  std::vector<uint8_t> gO_touched;
  std::array<int64_t, 4> dI{}, dW{}, dO{};

  int64_t reads[CostWorkspace::kMaxLevels][3] = {};
  int64_t writes[CostWorkspace::kMaxLevels][3] = {};
  int64_t hops = 0;

  Walker(const LayerShape& l, const Schedule& s, const ArchSpec& a, bool wd)
      : layer(l), sched(s), arch(a), with_data(wd) {}

  static bool indexes(int loop, int t) {
    return loop_indexes_tensor((LoopId)loop, (Tensor)t);
  }

  void setup(int64_t mac_cap) {
    auto storage = arch.storage_levels();
    M = (int)storage.size();
    if (M < 1 || (int)sched.levels.size() != M)
      throw std::runtime_error("oracle: schedule does not match hierarchy");
    p = arch.per_pe_level_count();
    has_interpe = arch.has_interpe();
    npes = sched.dataflow.pe_positions();

    NestGeometry g = NestGeometry::build(layer, sched, arch);
    trips = g.trips;
    ext = g.ext;
    padded = g.padded;
    for (int l = 0; l < 7; ++l) {
      S[l] = g.spatial[l];
      ppe[l] = 1;
      for (int j = 0; j < p; ++j) ppe[l] *= trips[j][l];
    }
    if (g.padded_macs() > mac_cap)
      throw std::runtime_error(
          "oracle: padded MAC count " + std::to_string(g.padded_macs()) +
          " exceeds the simulation cap " + std::to_string(mac_cap) +
          "; use the analytic model for larger shapes");

    for (int j = M - 1; j >= 0; --j)
      for (int oi = 0; oi < 7; ++oi) {
        int l = (int)sched.levels[j].order[oi];
        int64_t below = (j >= p) ? S[l] : 1;
        for (int j2 = 0; j2 < j; ++j2) below *= trips[j2][l];
        nest.push_back({j, l, trips[j][l], below});
      }
    idx.assign(nest.size(), 0);

    // Spatial decomposition: leftmost loop of a dimension varies fastest.
    auto& vl = sched.dataflow.vertical;
    auto& hl = sched.dataflow.horizontal;
    int64_t nv = 1, nh = 1;
    for (auto& u : vl) nv *= u.factor;
    for (auto& u : hl) nh *= u.factor;
    sp.assign(npes, {0, 0, 0, 0, 0, 0, 0});
    iv_of.assign(npes, 0);
    ih_of.assign(npes, 0);
    int64_t q = 0;
    for (int64_t iv = 0; iv < nv; ++iv)
      for (int64_t ih = 0; ih < nh; ++ih, ++q) {
        iv_of[q] = iv;
        ih_of[q] = ih;
        int64_t rv = iv;
        for (auto& u : vl) {
          sp[q][(int)u.loop] = rv % u.factor;
          rv /= u.factor;
        }
        int64_t rh = ih;
        for (auto& u : hl) {
          sp[q][(int)u.loop] = rh % u.factor;
          rh /= u.factor;
        }
      }

    blk.assign(M, {});
    blk_range.assign(M, {1, 1, 1, 1, 1, 1, 1});
    for (int i = M - 2; i >= 0; --i)
      for (int l = 0; l < 7; ++l)
        blk_range[i][l] = blk_range[i + 1][l] * trips[i + 1][l];

    resident.assign(M, {});
    resident_valid.assign(M, {false, false, false});
    seen_o.assign(M, {});

    // Buffers for levels 0..M-2; DRAM is the padded global arrays.
    bufs.assign(std::max(M - 1, 0), {});
    for (int i = 0; i < M - 1; ++i) {
      int copies = i < p ? (int)npes : 1;
      for (int t = 0; t < 3; ++t) {
        bufs[i][t].resize(copies);
        auto dims = tile_dims(i, t);
        for (auto& b : bufs[i][t]) {
          b.dims = dims;
          int64_t n = dims[0] * dims[1] * dims[2] * dims[3];
          if (with_data || (t == (int)Tensor::O && i == 0))
            b.vals.assign(with_data ? n : 0, 0);
          if (t == (int)Tensor::O && i == 0) b.touched.assign(n, 0);
        }
      }
    }

    dI = {padded[kB], padded[kC], padded[kX] + padded[kFX] - 1,
          padded[kY] + padded[kFY] - 1};
    dW = {padded[kK], padded[kC], padded[kFX], padded[kFY]};
    dO = {padded[kB], padded[kK], padded[kX], padded[kY]};
    if (with_data || M == 1) {
      if (with_data) {
        gI.assign(dI[0] * dI[1] * dI[2] * dI[3], 0);
        gW.assign(dW[0] * dW[1] * dW[2] * dW[3], 0);
        gO.assign(dO[0] * dO[1] * dO[2] * dO[3], 0);
      }
      if (M == 1) gO_touched.assign(dO[0] * dO[1] * dO[2] * dO[3], 0);
    }
  }

  std::array<int64_t, 4> tile_dims(int level, int t) const {
    const auto& e = ext[level];
    switch ((Tensor)t) {
      case Tensor::I:
        return {e[kB], e[kC], e[kX] + e[kFX] - 1, e[kY] + e[kFY] - 1};
      case Tensor::W:
        return {e[kK], e[kC], e[kFX], e[kFY]};
      case Tensor::O:
        return {e[kB], e[kK], e[kX], e[kY]};
    }
    return {};
  }

  int64_t tile_elems(int level, int t) const {
    auto d = tile_dims(level, t);
    return d[0] * d[1] * d[2] * d[3];
  }

  // Base coordinates of the level-i tile for PE q (spatial offsets apply
  // below the boundary only).
  std::array<int64_t, 7> loop_base(int level, int64_t q) const {
    std::array<int64_t, 7> lb{0, 0, 0, 0, 0, 0, 0};
    for (size_t d = 0; d < nest.size(); ++d)
      if (nest[d].level > level) lb[nest[d].loop] += idx[d] * nest[d].below;
    if (level < p)
      for (int l = 0; l < 7; ++l) lb[l] += sp[q][l] * ppe[l];
    return lb;
  }

  std::array<int64_t, 4> tensor_base(const std::array<int64_t, 7>& lb,
                                     int t) const {
    switch ((Tensor)t) {
      case Tensor::I:
        return {lb[kB], lb[kC], lb[kX] + lb[kFX], lb[kY] + lb[kFY]};
      case Tensor::W:
        return {lb[kK], lb[kC], lb[kFX], lb[kFY]};
      case Tensor::O:
        return {lb[kB], lb[kK], lb[kX], lb[kY]};
    }
    return {};
  }

  void compute_blk() {
    for (int l = 0; l < 7; ++l) blk[M - 1][l] = 0;
    for (int i = M - 2; i >= 0; --i) {
      std::array<int64_t, 7> cur{0, 0, 0, 0, 0, 0, 0};
      for (size_t d = 0; d < nest.size(); ++d)
        if (nest[d].level == i + 1) cur[nest[d].loop] = idx[d];
      for (int l = 0; l < 7; ++l)
        blk[i][l] = blk[i + 1][l] * trips[i + 1][l] + cur[l];
    }
  }

  bool key_changed(int level, int t) const {
    if (!resident_valid[level][t]) return true;
    for (int l = 0; l < 7; ++l)
      if (indexes(l, t) && resident[level][t][l] != blk[level][l]) return true;
    return false;
  }

  int64_t pack_o_key(int level) const {
    int64_t key = 0;
    for (int l : {kB, kK, kX, kY}) key = key * blk_range[level][l] + blk[level][l];
    return key;
  }

  // Value of tensor t at global coords from the parent of `level`.
  int64_t parent_value(int level, int t, int64_t q,
                       const std::array<int64_t, 4>& coord) const {
    if (!with_data) return 0;
    if (level + 1 == M - 1) {  // DRAM
      const auto& dims = t == 0 ? dI : t == 1 ? dW : dO;
      const auto& v = t == 0 ? gI : t == 1 ? gW : gO;
      return v[((coord[0] * dims[1] + coord[1]) * dims[2] + coord[2]) *
                   dims[3] +
               coord[3]];
    }
    const Buf& pb = bufs[level + 1][t][level + 1 < p ? q : 0];
    return pb.vals[(((coord[0] - pb.base[0]) * pb.dims[1] +
                     (coord[1] - pb.base[1])) *
                        pb.dims[2] +
                    (coord[2] - pb.base[2])) *
                       pb.dims[3] +
                   (coord[3] - pb.base[3])];
  }

  void parent_store(int level, int t, int64_t q,
                    const std::array<int64_t, 4>& coord, int64_t val) {
    if (!with_data) return;
    if (level + 1 == M - 1) {
      const auto& dims = t == 0 ? dI : t == 1 ? dW : dO;
      auto& v = t == 0 ? gI : t == 1 ? gW : gO;
      v[((coord[0] * dims[1] + coord[1]) * dims[2] + coord[2]) * dims[3] +
        coord[3]] = val;
      return;
    }
    Buf& pb = bufs[level + 1][t][level + 1 < p ? q : 0];
    pb.vals[(((coord[0] - pb.base[0]) * pb.dims[1] + (coord[1] - pb.base[1])) *
                 pb.dims[2] +
             (coord[2] - pb.base[2])) *
                pb.dims[3] +
            (coord[3] - pb.base[3])] = val;
  }

  template <typename Fn>
  void for_tile(const std::array<int64_t, 4>& base,
                const std::array<int64_t, 4>& dims, Fn&& fn) const {
    std::array<int64_t, 4> c;
    for (int64_t a = 0; a < dims[0]; ++a)
      for (int64_t b = 0; b < dims[1]; ++b)
        for (int64_t cc = 0; cc < dims[2]; ++cc)
          for (int64_t d = 0; d < dims[3]; ++d) {
            c = {base[0] + a, base[1] + b, base[2] + cc, base[3] + d};
            fn(c, ((a * dims[1] + b) * dims[2] + cc) * dims[3] + d);
          }
  }

  // PEs sharing one value of tensor t, grouped by the spatial projection
  // onto the loops that index it. Groups come out in PE order.
  std::vector<std::vector<int64_t>> spatial_groups(int t) const {
    std::map<std::array<int64_t, 7>, std::vector<int64_t>> m;
    for (int64_t q = 0; q < npes; ++q) {
      std::array<int64_t, 7> key{0, 0, 0, 0, 0, 0, 0};
      for (int l = 0; l < 7; ++l)
        if (indexes(l, t)) key[l] = sp[q][l];
      m[key].push_back(q);
    }
    std::vector<std::vector<int64_t>> groups;
    for (auto& [k, v] : m) groups.push_back(v);
    return groups;
  }

  // Hop count to serve one element to every member of a sharing group:
  // nearest-neighbor within the leftmost loop's group, a full group stride
  // across groups, vertical chain first then per-row horizontal chains.
  int64_t group_chain_hops(const std::vector<int64_t>& group) const {
    auto dim_hops = [&](const std::vector<SpatialUnroll>& dim,
                        const std::vector<int64_t>& flat) {
      int64_t s1 = dim.size() >= 1 ? dim[0].factor : 1;
      int64_t s2 = dim.size() >= 2 ? dim[1].factor : 1;
      std::unordered_set<int64_t> i1s, i2s;
      for (int64_t f : flat) {
        i1s.insert(f % s1);
        i2s.insert(f / s1);
      }
      bool spans1 = (int64_t)i1s.size() == s1;
      bool spans2 = (int64_t)i2s.size() == s2;
      if (spans1 && spans2) return s2 * (s1 - 1) + (s2 - 1) * s1;
      if (spans1) return s1 - 1;
      if (spans2) return (s2 - 1) * s1;
      return (int64_t)0;
    };
    std::vector<int64_t> vflat, hflat;
    std::unordered_set<int64_t> vseen;
    for (int64_t q : group) {
      if (vseen.insert(iv_of[q]).second) vflat.push_back(iv_of[q]);
    }
    std::unordered_set<int64_t> hseen;
    for (int64_t q : group)
      if (hseen.insert(ih_of[q]).second) hflat.push_back(ih_of[q]);
    int64_t ch_v = dim_hops(sched.dataflow.vertical, vflat);
    int64_t ch_h = dim_hops(sched.dataflow.horizontal, hflat);
    return ch_v + (int64_t)vflat.size() * ch_h;
  }

  void load_input_like(int level, int t) {
    int64_t ts = tile_elems(level, t);
    if (level == p - 1 && npes > 1) {
      auto groups = spatial_groups(t);
      for (auto& grp : groups) {
        reads[level + 1][t] += ts;  // one fetch serves the group
        if (has_interpe) hops += ts * group_chain_hops(grp);
        for (int64_t q : grp) {
          Buf& b = bufs[level][t][q];
          b.base = tensor_base(loop_base(level, q), t);
          writes[level][t] += ts;
          if (with_data)
            for_tile(b.base, b.dims,
                     [&](const std::array<int64_t, 4>& c, int64_t li) {
                       b.vals[li] = parent_value(level, t, q, c);
                     });
        }
      }
    } else {
      int copies = level < p ? (int)npes : 1;
      for (int64_t q = 0; q < copies; ++q) {
        Buf& b = bufs[level][t][q];
        b.base = tensor_base(loop_base(level, q), t);
        reads[level + 1][t] += ts;
        writes[level][t] += ts;
        if (with_data)
          for_tile(b.base, b.dims,
                   [&](const std::array<int64_t, 4>& c, int64_t li) {
                     b.vals[li] = parent_value(level, t, q, c);
                   });
      }
    }
  }

  void acquire_output(int level) {
    const int t = (int)Tensor::O;
    int64_t ts = tile_elems(level, t);
    bool first = seen_o[level].insert(pack_o_key(level)).second;
    int copies = level < p ? (int)npes : 1;
    auto fresh = [&](int64_t q) {
      Buf& b = bufs[level][t][q];
      b.base = tensor_base(loop_base(level, q), t);
      if (with_data) std::fill(b.vals.begin(), b.vals.end(), 0);
      if (level == 0) std::fill(b.touched.begin(), b.touched.end(), 0);
    };
    auto restore = [&](int64_t q) {
      Buf& b = bufs[level][t][q];
      b.base = tensor_base(loop_base(level, q), t);
      reads[level + 1][t] += ts;
      writes[level][t] += ts;
      if (with_data)
        for_tile(b.base, b.dims,
                 [&](const std::array<int64_t, 4>& c, int64_t li) {
                   b.vals[li] = parent_value(level, t, q, c);
                 });
      if (level == 0) std::fill(b.touched.begin(), b.touched.end(), 1);
    };
    if (level == p - 1 && npes > 1) {
      if (first) {
        for (int64_t q = 0; q < npes; ++q) fresh(q);
      } else {
        auto groups = spatial_groups(t);
        for (auto& grp : groups) {
          restore(grp[0]);  // group representative
          for (size_t j = 1; j < grp.size(); ++j) fresh(grp[j]);
        }
      }
    } else {
      for (int64_t q = 0; q < copies; ++q) {
        if (first)
          fresh(q);
        else
          restore(q);
      }
    }
  }

  void flush_output(int level) {
    const int t = (int)Tensor::O;
    if (!resident_valid[level][t]) return;
    int64_t ts = tile_elems(level, t);
    if (level == p - 1 && npes > 1) {
      auto groups = spatial_groups(t);
      for (auto& grp : groups) {
        reads[level][t] += ts * (int64_t)grp.size();  // drain partials
        if (has_interpe) {
          hops += ts * group_chain_hops(grp);
          writes[level + 1][t] += ts;  // merged in the fabric
          if (with_data) {
            const Buf& b0 = bufs[level][t][grp[0]];
            for_tile(b0.base, b0.dims,
                     [&](const std::array<int64_t, 4>& c, int64_t li) {
                       int64_t sum = 0;
                       for (int64_t q : grp) sum += bufs[level][t][q].vals[li];
                       parent_store(level, t, grp[0], c, sum);
                     });
          }
        } else {
          // Bus design: every PE drains; the parent merges in place.
          writes[level + 1][t] += ts * (int64_t)grp.size();
          reads[level + 1][t] += ts * (int64_t)(grp.size() - 1);
          if (with_data) {
            const Buf& b0 = bufs[level][t][grp[0]];
            for_tile(b0.base, b0.dims,
                     [&](const std::array<int64_t, 4>& c, int64_t li) {
                       int64_t sum = 0;
                       for (int64_t q : grp) sum += bufs[level][t][q].vals[li];
                       parent_store(level, t, grp[0], c, sum);
                     });
          }
        }
      }
    } else {
      int copies = level < p ? (int)npes : 1;
      for (int64_t q = 0; q < copies; ++q) {
        Buf& b = bufs[level][t][q];
        reads[level][t] += ts;
        writes[level + 1][t] += ts;
        if (with_data)
          for_tile(b.base, b.dims,
                   [&](const std::array<int64_t, 4>& c, int64_t li) {
                     parent_store(level, t, q, c, b.vals[li]);
                   });
      }
    }
  }

  void sync() {
    if (M == 1) return;
    compute_blk();
    for (int i = 0; i <= M - 2; ++i)
      if (key_changed(i, (int)Tensor::O)) flush_output(i);
    for (int i = M - 2; i >= 0; --i) {
      for (int t : {(int)Tensor::I, (int)Tensor::W}) {
        if (key_changed(i, t)) {
          load_input_like(i, t);
          resident[i][t] = blk[i];
          resident_valid[i][t] = true;
        }
      }
      if (key_changed(i, (int)Tensor::O)) {
        acquire_output(i);
        resident[i][(int)Tensor::O] = blk[i];
        resident_valid[i][(int)Tensor::O] = true;
      }
    }
  }

  void mac_step() {
    for (int64_t q = 0; q < npes; ++q) {
      std::array<int64_t, 7> g{0, 0, 0, 0, 0, 0, 0};
      for (size_t d = 0; d < nest.size(); ++d)
        g[nest[d].loop] += idx[d] * nest[d].below;
      for (int l = 0; l < 7; ++l) g[l] += sp[q][l] * ppe[l];
      auto ci = std::array<int64_t, 4>{g[kB], g[kC], g[kX] + g[kFX],
                                       g[kY] + g[kFY]};
      auto cw = std::array<int64_t, 4>{g[kK], g[kC], g[kFX], g[kFY]};
      auto co = std::array<int64_t, 4>{g[kB], g[kK], g[kX], g[kY]};
      if (M == 1) {
        reads[0][0]++;
        reads[0][1]++;
        int64_t oi = ((co[0] * dO[1] + co[1]) * dO[2] + co[2]) * dO[3] + co[3];
        int64_t v = 0;
        if (with_data) {
          int64_t vi =
              ((ci[0] * dI[1] + ci[1]) * dI[2] + ci[2]) * dI[3] + ci[3];
          int64_t wi =
              ((cw[0] * dW[1] + cw[1]) * dW[2] + cw[2]) * dW[3] + cw[3];
          v = gI[vi] * gW[wi];
        }
        if (gO_touched[oi]) {
          reads[0][2]++;
          writes[0][2]++;
          if (with_data) gO[oi] += v;
        } else {
          gO_touched[oi] = 1;
          writes[0][2]++;
          if (with_data) gO[oi] = v;
        }
        continue;
      }
      int bq = 0 < p ? (int)q : 0;
      Buf& bi = bufs[0][0][bq];
      Buf& bw = bufs[0][1][bq];
      Buf& bo = bufs[0][2][bq];
      reads[0][0]++;
      reads[0][1]++;
      int64_t v = 0;
      if (with_data) {
        int64_t vi = (((ci[0] - bi.base[0]) * bi.dims[1] +
                       (ci[1] - bi.base[1])) *
                          bi.dims[2] +
                      (ci[2] - bi.base[2])) *
                         bi.dims[3] +
                     (ci[3] - bi.base[3]);
        int64_t wi = (((cw[0] - bw.base[0]) * bw.dims[1] +
                       (cw[1] - bw.base[1])) *
                          bw.dims[2] +
                      (cw[2] - bw.base[2])) *
                         bw.dims[3] +
                     (cw[3] - bw.base[3]);
        v = bi.vals[vi] * bw.vals[wi];
      }
      int64_t oi = (((co[0] - bo.base[0]) * bo.dims[1] +
                     (co[1] - bo.base[1])) *
                        bo.dims[2] +
                    (co[2] - bo.base[2])) *
                       bo.dims[3] +
                   (co[3] - bo.base[3]);
      if (bo.touched[oi]) {
        reads[0][2]++;
        writes[0][2]++;
        if (with_data) bo.vals[oi] += v;
      } else {
        bo.touched[oi] = 1;
        writes[0][2]++;
        if (with_data) bo.vals[oi] = v;
      }
    }
  }

  TraceCounts run() {
    while (true) {
      sync();
      mac_step();
      int d = (int)nest.size() - 1;
      while (d >= 0 && ++idx[d] == nest[d].trip) idx[d--] = 0;
      if (d < 0) break;
    }
    if (M > 1) {
      compute_blk();
      for (int i = 0; i <= M - 2; ++i) flush_output(i);
    }
    TraceCounts c;
    c.levels.resize(M);
    for (int i = 0; i < M; ++i)
      for (int t = 0; t < 3; ++t) c.levels[i][t] = {reads[i][t], writes[i][t]};
    c.interpe_hops = hops;
    return c;
  }
};

}  // namespace

SimResult execute_scheduled(const LayerShape& layer, const Schedule& s,
                            const ArchSpec& arch,
                            const std::vector<int64_t>& input,
                            const std::vector<int64_t>& weights,
                            int64_t mac_cap) {
  if ((int64_t)input.size() != footprint(layer, Tensor::I) ||
      (int64_t)weights.size() != footprint(layer, Tensor::W))
    throw std::invalid_argument("execute_scheduled: tensor extents mismatch");
  Walker w(layer, s, arch, true);
  w.setup(mac_cap);
  // Copy true-extent data into the zero-padded global arrays.
  const int64_t XW = layer.x + layer.fx - 1, YW = layer.y + layer.fy - 1;
  for (int64_t b = 0; b < layer.b; ++b)
    for (int64_t c = 0; c < layer.c; ++c)
      for (int64_t x = 0; x < XW; ++x)
        for (int64_t y = 0; y < YW; ++y)
          w.gI[((b * w.dI[1] + c) * w.dI[2] + x) * w.dI[3] + y] =
              input[((b * layer.c + c) * XW + x) * YW + y];
  for (int64_t k = 0; k < layer.k; ++k)
    for (int64_t c = 0; c < layer.c; ++c)
      for (int64_t fx = 0; fx < layer.fx; ++fx)
        for (int64_t fy = 0; fy < layer.fy; ++fy)
          w.gW[((k * w.dW[1] + c) * w.dW[2] + fx) * w.dW[3] + fy] =
              weights[((k * layer.c + c) * layer.fx + fx) * layer.fy + fy];
  SimResult r;
  r.counts = w.run();
  r.output.resize(footprint(layer, Tensor::O));
  for (int64_t b = 0; b < layer.b; ++b)
    for (int64_t k = 0; k < layer.k; ++k)
      for (int64_t x = 0; x < layer.x; ++x)
        for (int64_t y = 0; y < layer.y; ++y)
          r.output[((b * layer.k + k) * layer.x + x) * layer.y + y] =
              w.gO[((b * w.dO[1] + k) * w.dO[2] + x) * w.dO[3] + y];
  return r;
}

TraceCounts simulate(const LayerShape& layer, const Schedule& s,
                     const ArchSpec& arch, int64_t mac_cap) {
  Walker w(layer, s, arch, false);
  w.setup(mac_cap);
  return w.run();
}

}  // namespace nest
