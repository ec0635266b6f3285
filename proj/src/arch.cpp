#include "cxrnet/arch.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <regex>
#include <set>
#include <sstream>

#include "cxrnet/errors.hpp"

namespace cxr {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string kind_tag(const LayerKind& kind) {
  return std::visit(overloaded{
                        [](const spec::Conv2D&) { return std::string("conv"); },
                        [](const spec::MaxPool&) { return std::string("maxpool"); },
                        [](const spec::Flatten&) { return std::string("flatten"); },
                        [](const spec::Dense&) { return std::string("dense"); },
                        [](const spec::BatchNorm&) { return std::string("batchnorm"); },
                        [](const spec::Dropout&) { return std::string("dropout"); },
                        [](const spec::SoftmaxOutput&) { return std::string("softmax"); },
                    },
                    kind);
}

std::size_t ArchitectureSpec::classes() const {
  if (layers.empty()) throw SpecError("empty architecture");
  const auto* out = std::get_if<spec::SoftmaxOutput>(&layers.back().kind);
  if (!out) throw SpecError("final layer '" + layers.back().name + "' is not a softmax output");
  return out->classes;
}

namespace {

void append_block(ArchitectureSpec& s, int block, std::size_t filters, int convs) {
  for (int i = 1; i <= convs; ++i) {
    s.layers.push_back({"2D-Conv_1" + std::to_string(block) + std::to_string(i), spec::Conv2D{3, filters}});
  }
  s.layers.push_back({"Pool_1" + std::to_string(block), spec::MaxPool{2, 2}});
}

void append_tail(ArchitectureSpec& s, const FlatTail& tail, double dropout, std::size_t classes) {
  s.layers.push_back({"Flat_11", spec::Flatten{}});
  s.layers.push_back({"Layer_11", spec::Dense{tail.dense1}});
  s.layers.push_back({"Layer_12", spec::Dense{tail.dense2}});
  s.layers.push_back({"Layer_13", spec::Dense{tail.dense3}});
  s.layers.push_back({"Norm_11", spec::BatchNorm{}});
  s.layers.push_back({"Layer_14", spec::Dense{tail.dense4}});
  s.layers.push_back({"Drop_11", spec::Dropout{dropout}});
  s.layers.push_back({"Out_1", spec::SoftmaxOutput{classes}});
}

void check_head_args(std::size_t classes, double dropout) {
  if (classes < 2) throw SpecError("need at least 2 classes, got " + std::to_string(classes));
  if (!(dropout >= 0.0 && dropout < 1.0)) throw SpecError("dropout must lie in [0, 1), got " + std::to_string(dropout));
}

}  // namespace

ArchitectureSpec vgg16_spec(std::size_t classes, double dropout, std::size_t height, std::size_t width,
                            std::size_t channels) {
  check_head_args(classes, dropout);
  ArchitectureSpec s{height, width, channels, {}};
  append_block(s, 1, 64, 2);
  append_block(s, 2, 128, 2);
  append_block(s, 3, 256, 3);
  append_block(s, 4, 512, 3);
  append_block(s, 5, 512, 3);
  append_tail(s, FlatTail{}, dropout, classes);
  return s;
}

ArchitectureSpec vgg19_spec(std::size_t classes, double dropout, std::size_t height, std::size_t width,
                            std::size_t channels) {
  ArchitectureSpec s = vgg16_spec(classes, dropout, height, width, channels);
  const std::pair<const char*, std::size_t> insertions[] = {
      {"2D-Conv_133", 256}, {"2D-Conv_143", 512}, {"2D-Conv_153", 512}};
  for (const auto& [after, filters] : insertions) {
    auto it = std::find_if(s.layers.begin(), s.layers.end(), [&](const LayerSpec& l) { return l.name == after; });
    std::string name = after;
    name.back() = '4';
    s.layers.insert(it + 1, LayerSpec{name, spec::Conv2D{3, filters}});
  }
  return s;
}

ArchitectureSpec mini_vgg_spec(std::size_t classes, double dropout, std::size_t height, std::size_t width,
                               std::size_t block1, std::size_t block2, FlatTail tail) {
  check_head_args(classes, dropout);
  ArchitectureSpec s{height, width, 3, {}};
  append_block(s, 1, block1, 2);
  append_block(s, 2, block2, 2);
  append_tail(s, tail, dropout, classes);
  return s;
}

bool is_named_spec(const std::string& name) { return name == "vgg16" || name == "vgg19" || name == "mini-vgg"; }

ArchitectureSpec named_spec(const std::string& name, std::size_t classes, double dropout, std::size_t height,
                            std::size_t width) {
  if (name == "vgg16") return vgg16_spec(classes, dropout, height, width);
  if (name == "vgg19") return vgg19_spec(classes, dropout, height, width);
  if (name == "mini-vgg") return mini_vgg_spec(classes, dropout, height, width);
  throw SpecError("unknown architecture '" + name + "' (expected vgg16, vgg19, mini-vgg or a spec file)");
}

std::vector<Shape> infer_shapes(const ArchitectureSpec& s) {
  if (s.height == 0 || s.width == 0 || s.channels == 0) throw SpecError("input extents must be positive");
  Shape cur{s.height, s.width, s.channels};
  std::vector<Shape> out;
  out.reserve(s.layers.size());
  for (const auto& layer : s.layers) {
    const auto fail = [&](const std::string& why) {
      throw SpecError("layer '" + layer.name + "' (" + kind_tag(layer.kind) + "): " + why + ", input " +
                      shape_str(cur));
    };
    std::visit(overloaded{
                   [&](const spec::Conv2D& c) {
                     if (cur.size() != 3) fail("convolution needs an H x W x C input");
                     if (c.kernel == 0 || c.kernel % 2 == 0) fail("same padding needs an odd kernel");
                     if (c.filters == 0) fail("zero filters");
                     cur = {cur[0], cur[1], c.filters};
                   },
                   [&](const spec::MaxPool& p) {
                     if (cur.size() != 3) fail("pooling needs an H x W x C input");
                     if (p.pool == 0 || p.stride == 0) fail("pool and stride must be at least 1");
                     if (cur[0] < p.pool || cur[1] < p.pool) fail("input smaller than the pool window");
                     cur = {(cur[0] - p.pool) / p.stride + 1, (cur[1] - p.pool) / p.stride + 1, cur[2]};
                   },
                   [&](const spec::Flatten&) {
                     if (cur.size() != 3) fail("flatten needs an H x W x C input");
                     cur = {cur[0] * cur[1] * cur[2]};
                   },
                   [&](const spec::Dense& d) {
                     if (cur.size() != 1) fail("dense layer before flatten");
                     if (d.units == 0) fail("zero units");
                     cur = {d.units};
                   },
                   [&](const spec::BatchNorm&) {
                     if (cur.size() != 1) fail("batch normalization expects flat features");
                   },
                   [&](const spec::Dropout& d) {
                     if (!(d.p >= 0.0 && d.p < 1.0)) fail("dropout probability outside [0, 1)");
                   },
                   [&](const spec::SoftmaxOutput& o) {
                     if (cur.size() != 1) fail("softmax output before flatten");
                     if (o.classes < 2) fail("softmax output needs at least 2 classes");
                     cur = {o.classes};
                   },
               },
               layer.kind);
    out.push_back(cur);
  }
  return out;
}

void validate_spec(const ArchitectureSpec& s) {
  if (s.layers.empty()) throw SpecError("architecture has no layers");
  std::set<std::string> names;
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& l = s.layers[i];
    if (l.name.empty() || l.name.find_first_of(" \t") != std::string::npos) {
      throw SpecError("layer " + std::to_string(i) + " has an invalid name '" + l.name + "'");
    }
    if (!names.insert(l.name).second) throw SpecError("duplicate layer name '" + l.name + "'");
    if (std::holds_alternative<spec::SoftmaxOutput>(l.kind) && i + 1 != s.layers.size()) {
      throw SpecError("layer '" + l.name + "': softmax output must be the final layer");
    }
  }
  s.classes();
  infer_shapes(s);
}

ParamCount count_params(const ArchitectureSpec& s) {
  const auto shapes = infer_shapes(s);
  ParamCount pc;
  Shape in{s.height, s.width, s.channels};
  for (std::size_t i = 0; i < s.layers.size(); ++i) {
    const auto& layer = s.layers[i];
    LayerParamCount lc{layer.name, kind_tag(layer.kind), shapes[i], 0, 0};
    std::visit(overloaded{
                   [&](const spec::Conv2D& c) { lc.trainable = c.kernel * c.kernel * in[2] * c.filters + c.filters; },
                   [&](const spec::Dense& d) { lc.trainable = in[0] * d.units + d.units; },
                   [&](const spec::SoftmaxOutput& o) { lc.trainable = in[0] * o.classes + o.classes; },
                   [&](const spec::BatchNorm&) {
                     lc.trainable = 2 * in[0];
                     lc.non_trainable = 2 * in[0];
                   },
                   [](const auto&) {},
               },
               layer.kind);
    pc.trainable += lc.trainable;
    pc.non_trainable += lc.non_trainable;
    pc.layers.push_back(std::move(lc));
    in = shapes[i];
  }
  return pc;
}

namespace {

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::size_t parse_size(const std::string& text, const std::string& context) {
  std::size_t v = 0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw SpecError(context + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_real(const std::string& text, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw SpecError(context + ": expected a number, got '" + text + "'");
  }
  return v;
}

}  // namespace

std::string format_spec(const ArchitectureSpec& s) {
  std::ostringstream os;
  os << "input " << s.height << 'x' << s.width << 'x' << s.channels << '\n';
  for (const auto& l : s.layers) {
    os << l.name << ' ';
    std::visit(overloaded{
                   [&](const spec::Conv2D& c) { os << "conv(" << c.kernel << ',' << c.filters << ')'; },
                   [&](const spec::MaxPool& p) { os << "maxpool(" << p.pool << ',' << p.stride << ')'; },
                   [&](const spec::Flatten&) { os << "flatten"; },
                   [&](const spec::Dense& d) { os << "dense(" << d.units << ')'; },
                   [&](const spec::BatchNorm&) { os << "batchnorm"; },
                   [&](const spec::Dropout& d) { os << "dropout(" << format_double(d.p) << ')'; },
                   [&](const spec::SoftmaxOutput& o) { os << "softmax(" << o.classes << ')'; },
               },
               l.kind);
    os << '\n';
  }
  return os.str();
}

ArchitectureSpec parse_spec(const std::string& text) {
  static const std::regex input_re(R"(^input\s+(\d+)x(\d+)x(\d+)$)");
  static const std::regex layer_re(R"(^(\S+)\s+([a-z0-9_]+)(?:\(([^)]*)\))?$)");
  ArchitectureSpec s;
  s.layers.clear();
  bool have_input = false;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto b = line.find_first_not_of(" \t\r");
    if (b == std::string::npos) continue;
    line = line.substr(b, line.find_last_not_of(" \t\r") - b + 1);
    const std::string ctx = "line " + std::to_string(line_no);
    std::smatch m;
    if (std::regex_match(line, m, input_re)) {
      if (have_input || !s.layers.empty()) throw SpecError(ctx + ": 'input' must appear once, before any layer");
      s.height = parse_size(m[1], ctx);
      s.width = parse_size(m[2], ctx);
      s.channels = parse_size(m[3], ctx);
      have_input = true;
      continue;
    }
    if (!std::regex_match(line, m, layer_re)) throw SpecError(ctx + ": cannot parse '" + line + "'");
    const std::string name = m[1], kind = m[2];
    std::vector<std::string> args;
    if (m[3].matched) {
      std::stringstream ss(m[3].str());
      std::string a;
      while (std::getline(ss, a, ',')) {
        const auto ab = a.find_first_not_of(' ');
        args.push_back(ab == std::string::npos ? std::string{} : a.substr(ab, a.find_last_not_of(' ') - ab + 1));
      }
    }
    const auto want = [&](std::size_t n) {
      if (args.size() != n) {
        throw SpecError(ctx + ": '" + kind + "' takes " + std::to_string(n) + " argument(s), got " +
                        std::to_string(args.size()));
      }
    };
    LayerKind k;
    if (kind == "conv") {
      want(2);
      k = spec::Conv2D{parse_size(args[0], ctx), parse_size(args[1], ctx)};
    } else if (kind == "maxpool") {
      want(2);
      k = spec::MaxPool{parse_size(args[0], ctx), parse_size(args[1], ctx)};
    } else if (kind == "flatten") {
      want(0);
      k = spec::Flatten{};
    } else if (kind == "dense") {
      want(1);
      k = spec::Dense{parse_size(args[0], ctx)};
    } else if (kind == "batchnorm") {
      want(0);
      k = spec::BatchNorm{};
    } else if (kind == "dropout") {
      want(1);
      k = spec::Dropout{parse_real(args[0], ctx)};
    } else if (kind == "softmax") {
      want(1);
      k = spec::SoftmaxOutput{parse_size(args[0], ctx)};
    } else {
      throw SpecError(ctx + ": unknown layer kind '" + kind + "'");
    }
    s.layers.push_back({name, k});
  }
  if (!have_input) throw SpecError("missing 'input HxWxC' line");
  validate_spec(s);
  return s;
}

ArchitectureSpec load_spec_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SpecError("cannot open architecture file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_spec(ss.str());
  } catch (const SpecError& e) {
    throw SpecError(path.string() + ": " + e.what());
  }
}

}  // namespace cxr
