#include "nest/workload.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace nest {

const char* to_string(LoopId l) {
  switch (l) {
    case LoopId::B: return "B";
    case LoopId::K: return "K";
    case LoopId::C: return "C";
    case LoopId::X: return "X";
    case LoopId::Y: return "Y";
    case LoopId::FX: return "FX";
    case LoopId::FY: return "FY";
  }
  return "?";
}

bool parse_loop_id(const std::string& s, LoopId& out) {
  for (LoopId l : kAllLoops) {
    if (s == to_string(l)) {
      out = l;
      return true;
    }
  }
  return false;
}

const char* to_string(Tensor t) {
  switch (t) {
    case Tensor::I: return "I";
    case Tensor::W: return "W";
    case Tensor::O: return "O";
  }
  return "?";
}

bool loop_indexes_tensor(LoopId l, Tensor t) {
  switch (t) {
    case Tensor::I: return l != LoopId::K;
    case Tensor::W: return l == LoopId::K || l == LoopId::C ||
                           l == LoopId::FX || l == LoopId::FY;
    case Tensor::O: return l == LoopId::B || l == LoopId::K ||
                           l == LoopId::X || l == LoopId::Y;
  }
  return false;
}

int64_t LayerShape::bound(LoopId l) const {
  switch (l) {
    case LoopId::B: return b;
    case LoopId::K: return k;
    case LoopId::C: return c;
    case LoopId::X: return x;
    case LoopId::Y: return y;
    case LoopId::FX: return fx;
    case LoopId::FY: return fy;
  }
  return 0;
}

std::array<int64_t, kNumLoops> LayerShape::bounds() const {
  return {b, k, c, x, y, fx, fy};
}

void check_shape(const LayerShape& s) {
  for (LoopId l : kAllLoops) {
    if (s.bound(l) < 1) {
      throw std::invalid_argument(std::string("invalid shape: bound ") +
                                  to_string(l) + " must be >= 1");
    }
  }
  if (s.kind == LayerKind::FC &&
      (s.x != 1 || s.y != 1 || s.fx != 1 || s.fy != 1)) {
    throw std::invalid_argument(
        "invalid shape: FC layer requires X = Y = FX = FY = 1");
  }
}

LayerShape make_conv(int64_t b, int64_t k, int64_t c, int64_t x, int64_t y,
                     int64_t fx, int64_t fy) {
  LayerShape s{b, k, c, x, y, fx, fy, LayerKind::Conv};
  check_shape(s);
  return s;
}

LayerShape make_fc(int64_t c, int64_t k, int64_t batch) {
  LayerShape s{batch, k, c, 1, 1, 1, 1, LayerKind::FC};
  check_shape(s);
  return s;
}

int64_t mac_count(const LayerShape& s) {
  return s.b * s.k * s.c * s.x * s.y * s.fx * s.fy;
}

int64_t footprint(const LayerShape& s, Tensor t) {
  switch (t) {
    case Tensor::I: return s.b * s.c * (s.x + s.fx - 1) * (s.y + s.fy - 1);
    case Tensor::W: return s.k * s.c * s.fx * s.fy;
    case Tensor::O: return s.b * s.k * s.x * s.y;
  }
  return 0;
}

ParseError::ParseError(const std::string& msg, int line_no)
    : std::runtime_error("line " + std::to_string(line_no) + ": " + msg),
      line(line_no) {}

namespace {

std::vector<std::string> tokenize(const std::string& line) {
  std::vector<std::string> toks;
  std::istringstream in(line);
  std::string t;
  while (in >> t) {
    if (t[0] == '#') break;
    toks.push_back(t);
  }
  return toks;
}

int64_t parse_count(const std::string& v, const std::string& key, int ln) {
  try {
    size_t pos = 0;
    int64_t n = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return n;
  } catch (const std::exception&) {
    throw ParseError("bad value '" + v + "' for " + key, ln);
  }
}

}  // namespace

Network parse_network(const std::string& text, const std::string& name) {
  Network net;
  net.name = name;
  std::set<std::string> seen;
  std::istringstream in(text);
  std::string line;
  int ln = 0;
  while (std::getline(in, line)) {
    ++ln;
    auto toks = tokenize(line);
    if (toks.empty()) continue;
    if (toks[0] != "layer")
      throw ParseError("expected 'layer', got '" + toks[0] + "'", ln);
    if (toks.size() < 3) throw ParseError("layer line needs a name and a type", ln);
    const std::string& lname = toks[1];
    const std::string& type = toks[2];
    if (!seen.insert(lname).second)
      throw ParseError("duplicate layer name '" + lname + "'", ln);

    LayerShape s;
    if (type == "conv") {
      s.kind = LayerKind::Conv;
    } else if (type == "fc") {
      s.kind = LayerKind::FC;
    } else {
      throw ParseError("unsupported layer type '" + type +
                           "' (only conv and fc layers are modeled; pooling, "
                           "normalization, element-wise and depthwise layers "
                           "are out of scope)",
                       ln);
    }

    for (size_t i = 3; i < toks.size(); ++i) {
      auto eq = toks[i].find('=');
      if (eq == std::string::npos)
        throw ParseError("expected key=value, got '" + toks[i] + "'", ln);
      std::string key = toks[i].substr(0, eq);
      int64_t v = parse_count(toks[i].substr(eq + 1), key, ln);
      if (key == "stride") {
        if (v != 1)
          throw ParseError("stride=" + std::to_string(v) +
                               " not supported (unit stride only)",
                           ln);
        continue;
      }
      LoopId l;
      if (!parse_loop_id(key, l))
        throw ParseError("unknown key '" + key + "'", ln);
      switch (l) {
        case LoopId::B: s.b = v; break;
        case LoopId::K: s.k = v; break;
        case LoopId::C: s.c = v; break;
        case LoopId::X: s.x = v; break;
        case LoopId::Y: s.y = v; break;
        case LoopId::FX: s.fx = v; break;
        case LoopId::FY: s.fy = v; break;
      }
    }
    try {
      check_shape(s);
    } catch (const std::invalid_argument& e) {
      throw ParseError(e.what(), ln);
    }
    net.layers.emplace_back(lname, s);
  }
  return net;
}

Network load_network(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open workload file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  std::string name = path;
  auto slash = name.find_last_of("/\\");
  if (slash != std::string::npos) name = name.substr(slash + 1);
  auto dot = name.find_last_of('.');
  if (dot != std::string::npos) name = name.substr(0, dot);
  return parse_network(ss.str(), name);
}

std::string to_text(const Network& net) {
  std::ostringstream out;
  for (const auto& [lname, s] : net.layers) {
    out << "layer " << lname << ' '
        << (s.kind == LayerKind::FC ? "fc" : "conv");
    out << " B=" << s.b << " K=" << s.k << " C=" << s.c;
    if (s.kind == LayerKind::Conv) {
      out << " X=" << s.x << " Y=" << s.y << " FX=" << s.fx
          << " FY=" << s.fy;
    }
    out << '\n';
  }
  return out.str();
}

void save_network(const Network& net, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write workload file: " + path);
  f << to_text(net);
}

}  // namespace nest
