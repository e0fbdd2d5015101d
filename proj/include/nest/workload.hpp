#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace nest {

// The seven loops of a dense convolution, in fixed canonical order.
enum class LoopId : int { B = 0, K = 1, C = 2, X = 3, Y = 4, FX = 5, FY = 6 };
inline constexpr int kNumLoops = 7;
inline constexpr std::array<LoopId, 7> kAllLoops{
    LoopId::B, LoopId::K, LoopId::C, LoopId::X,
    LoopId::Y, LoopId::FX, LoopId::FY};

const char* to_string(LoopId l);
bool parse_loop_id(const std::string& s, LoopId& out);

enum class Tensor : int { I = 0, W = 1, O = 2 };
inline constexpr std::array<Tensor, 3> kTensors{Tensor::I, Tensor::W, Tensor::O};
const char* to_string(Tensor t);

// Which loops address a tensor: I[b][c][x+fx][y+fy], W[k][c][fx][fy],
// O[b][k][x][y].
bool loop_indexes_tensor(LoopId l, Tensor t);

enum class LayerKind { Conv, FC };

// Loop bounds of one CONV or FC layer. FC is a degenerate CONV with
// X = Y = FX = FY = 1, so every downstream computation has one code path.
struct LayerShape {
  int64_t b = 1;   // batch
  int64_t k = 1;   // output channels
  int64_t c = 1;   // input channels
  int64_t x = 1;   // output width
  int64_t y = 1;   // output height
  int64_t fx = 1;  // filter width
  int64_t fy = 1;  // filter height
  LayerKind kind = LayerKind::Conv;

  int64_t bound(LoopId l) const;
  std::array<int64_t, kNumLoops> bounds() const;

  bool operator==(const LayerShape&) const = default;
};

// Throws std::invalid_argument if any bound is < 1 or an FC shape has a
// spatial bound != 1.
void check_shape(const LayerShape& s);

LayerShape make_conv(int64_t b, int64_t k, int64_t c, int64_t x, int64_t y,
                     int64_t fx, int64_t fy);
LayerShape make_fc(int64_t c, int64_t k, int64_t batch);

// Total multiply-accumulates: the product of all seven bounds.
int64_t mac_count(const LayerShape& s);

// Elements touched by one tensor at unit stride with no padding:
//   I -> B*C*(X+FX-1)*(Y+FY-1),  W -> K*C*FX*FY,  O -> B*K*X*Y.
int64_t footprint(const LayerShape& s, Tensor t);

struct Network {
  std::string name;
  std::vector<std::pair<std::string, LayerShape>> layers;

  bool operator==(const Network&) const = default;
};

// Raised by the file loaders; carries the 1-based offending line.
struct ParseError : std::runtime_error {
  ParseError(const std::string& msg, int line_no);
  int line = 0;
};

// Line-oriented workload format:
//   layer <name> <conv|fc> B=<n> K=<n> C=<n> X=<n> Y=<n> FX=<n> FY=<n>
// fc lines may omit X/Y/FX/FY. '#' starts a comment. A stride key is
// accepted but rejected unless equal to 1.
Network parse_network(const std::string& text, const std::string& name);
Network load_network(const std::string& path);
std::string to_text(const Network& net);
void save_network(const Network& net, const std::string& path);

}  // namespace nest
