#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include "cxrnet/arch.hpp"
#include "cxrnet/augment.hpp"
#include "cxrnet/optim.hpp"

namespace cxr {

/// Everything that determines a training or cross-validation run.
struct RunConfig {
  std::string arch = "vgg16";  // vgg16 | vgg19 | mini-vgg | path to a spec file
  std::size_t epochs = 200;
  std::size_t batch_size = 32;
  double dropout = 0.3;
  std::size_t k = 5;
  std::uint64_t seed = 0;
  std::size_t image_size = kDefaultImageSize;
  bool augment = true;
  std::filesystem::path data;
  std::filesystem::path out;
  AdamConfig adam;
  AugmentConfig augmentation;

  /// Throws ConfigError on out-of-range values.
  void validate() const;
  /// Resolves `arch` to a spec whose input matches image_size.
  ArchitectureSpec architecture() const;
};

/// Flat `key = value` text; `#` starts a comment. Keys:
///   arch epochs batch_size lr beta1 beta2 adam_epsilon dropout k seed
///   image_size augment data out rotation_deg width_shift height_shift
///   shear_deg zoom channel_shift hflip vflip fill
/// Unknown keys and malformed values raise ConfigError. Relative `data`,
/// `out` and spec-file `arch` paths resolve against `base_dir`.
RunConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path);
/// Applies one `key=value` override on top of an existing config.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value,
                        const std::filesystem::path& base_dir = {});
/// Canonical snapshot listing every key; parse_config(format_config(c)) == c.
std::string format_config(const RunConfig& cfg);

}  // namespace cxr
