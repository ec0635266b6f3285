#include "cxrnet/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "cxrnet/data.hpp"
#include "cxrnet/errors.hpp"

namespace fs = std::filesystem;

namespace cxr {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  return s.substr(b, s.find_last_not_of(" \t\r") - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T v{};
  auto res = std::from_chars(value.data(), value.data() + value.size(), v);
  if (res.ec != std::errc{} || res.ptr != value.data() + value.size()) {
    throw ConfigError("invalid value for '" + key + "': '" + value + "'");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
  if (value == "false" || value == "0" || value == "no" || value == "off") return false;
  throw ConfigError("invalid boolean for '" + key + "': '" + value + "'");
}

fs::path resolve(const fs::path& base, const std::string& value) {
  if (value.empty()) return {};
  fs::path p(value);
  if (p.is_relative() && !base.empty()) p = base / p;
  return p.lexically_normal();
}

std::string fmt_real(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

}  // namespace

void RunConfig::validate() const {
  if (epochs < 1) throw ConfigError("epochs must be at least 1");
  if (batch_size < 2) throw ConfigError("batch_size must be at least 2 (batch normalization needs it)");
  if (!(adam.lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("beta1 and beta2 must lie in [0, 1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("adam_epsilon must be positive");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (k < 2) throw ConfigError("k must be at least 2");
  if (image_size < 16) throw ConfigError("image_size must be at least 16");
  augmentation.validate();
}

ArchitectureSpec RunConfig::architecture() const {
  if (is_named_spec(arch)) return named_spec(arch, kNumClasses, dropout, image_size, image_size);
  ArchitectureSpec s = load_spec_file(arch);
  s.height = image_size;
  s.width = image_size;
  validate_spec(s);
  return s;
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value, const fs::path& base) {
  if (key == "arch") cfg.arch = is_named_spec(value) ? value : resolve(base, value).string();
  else if (key == "epochs") cfg.epochs = parse_number<std::size_t>(key, value);
  else if (key == "batch_size") cfg.batch_size = parse_number<std::size_t>(key, value);
  else if (key == "lr") cfg.adam.lr = parse_number<double>(key, value);
  else if (key == "beta1") cfg.adam.beta1 = parse_number<double>(key, value);
  else if (key == "beta2") cfg.adam.beta2 = parse_number<double>(key, value);
  else if (key == "adam_epsilon") cfg.adam.epsilon = parse_number<double>(key, value);
  else if (key == "dropout") cfg.dropout = parse_number<double>(key, value);
  else if (key == "k") cfg.k = parse_number<std::size_t>(key, value);
  else if (key == "seed") cfg.seed = parse_number<std::uint64_t>(key, value);
  else if (key == "image_size") cfg.image_size = parse_number<std::size_t>(key, value);
  else if (key == "augment") cfg.augment = parse_bool(key, value);
  else if (key == "data") cfg.data = resolve(base, value);
  else if (key == "out") cfg.out = resolve(base, value);
  else if (key == "rotation_deg") cfg.augmentation.rotation_deg = parse_number<double>(key, value);
  else if (key == "width_shift") cfg.augmentation.width_shift_frac = parse_number<double>(key, value);
  else if (key == "height_shift") cfg.augmentation.height_shift_frac = parse_number<double>(key, value);
  else if (key == "shear_deg") cfg.augmentation.shear_deg_ccw = parse_number<double>(key, value);
  else if (key == "zoom") cfg.augmentation.zoom_frac = parse_number<double>(key, value);
  else if (key == "channel_shift") cfg.augmentation.channel_shift = parse_number<double>(key, value);
  else if (key == "hflip") cfg.augmentation.hflip = parse_bool(key, value);
  else if (key == "vflip") cfg.augmentation.vflip = parse_bool(key, value);
  else if (key == "fill") cfg.augmentation.fill = parse_number<double>(key, value);
  else throw ConfigError("unknown config key '" + key + "'");
  cfg.augmentation.seed = cfg.seed;
}

RunConfig parse_config(const std::string& text, const fs::path& base) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    try {
      apply_config_entry(cfg, key, value, base);
    } catch (const ConfigError& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return cfg;
}

RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path.parent_path());
}

std::string format_config(const RunConfig& c) {
  std::ostringstream os;
  const auto& a = c.augmentation;
  os << "arch = " << c.arch << '\n'
     << "epochs = " << c.epochs << '\n'
     << "batch_size = " << c.batch_size << '\n'
     << "lr = " << fmt_real(c.adam.lr) << '\n'
     << "beta1 = " << fmt_real(c.adam.beta1) << '\n'
     << "beta2 = " << fmt_real(c.adam.beta2) << '\n'
     << "adam_epsilon = " << fmt_real(c.adam.epsilon) << '\n'
     << "dropout = " << fmt_real(c.dropout) << '\n'
     << "k = " << c.k << '\n'
     << "seed = " << c.seed << '\n'
     << "image_size = " << c.image_size << '\n'
     << "augment = " << (c.augment ? "true" : "false") << '\n'
     << "data = " << c.data.string() << '\n'
     << "out = " << c.out.string() << '\n'
     << "rotation_deg = " << fmt_real(a.rotation_deg) << '\n'
     << "width_shift = " << fmt_real(a.width_shift_frac) << '\n'
     << "height_shift = " << fmt_real(a.height_shift_frac) << '\n'
     << "shear_deg = " << fmt_real(a.shear_deg_ccw) << '\n'
     << "zoom = " << fmt_real(a.zoom_frac) << '\n'
     << "channel_shift = " << fmt_real(a.channel_shift) << '\n'
     << "hflip = " << (a.hflip ? "true" : "false") << '\n'
     << "vflip = " << (a.vflip ? "true" : "false") << '\n'
     << "fill = " << fmt_real(a.fill) << '\n';
  return os.str();
}

}  // namespace cxr
