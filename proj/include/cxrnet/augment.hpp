#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>

#include "cxrnet/image_io.hpp"
#include "cxrnet/rng.hpp"
#include "cxrnet/tensor.hpp"

namespace cxr {

inline constexpr std::size_t kDefaultImageSize = 182;

/// Training-time transform ranges. Defaults reproduce the published recipe.
struct AugmentConfig {
  double rotation_deg = 50.0;      // angle ~ U[-r, +r]
  double width_shift_frac = 0.20;  // horizontal shift ~ U[-f, +f] · width
  double height_shift_frac = 0.20;
  double shear_deg_ccw = 0.25;     // shear angle ~ U[0, s], counter-clockwise only
  double zoom_frac = 0.10;         // per-axis zoom ~ U[1 - z, 1 + z]
  double channel_shift = 0.20;     // additive per-channel offset ~ U[-c, +c]
  bool hflip = true;               // each flip independently with probability 1/2
  bool vflip = true;
  double fill = 0.0;
  std::uint64_t seed = 0;

  /// Every range zero and both flips off.
  static AugmentConfig identity();
  /// Throws ConfigError when a range is outside its legal interval.
  void validate() const;
};

/// One concrete draw of transform parameters.
struct TransformParams {
  bool hflip = false;
  bool vflip = false;
  double rotation_deg = 0.0;  // positive = counter-clockwise on screen
  double shear_deg = 0.0;
  double zoom_x = 1.0;        // > 1 magnifies
  double zoom_y = 1.0;
  double shift_x = 0.0;       // pixels, positive = content moves right
  double shift_y = 0.0;       // pixels, positive = content moves down
  std::array<double, 3> channel_offset{0.0, 0.0, 0.0};
};

struct ChannelStats {
  std::array<double, 3> mean{};
  std::array<double, 3> std{};
};

/// Bilinear resample (pixel-centre aligned, edge-clamped) to size×size×3 with
/// values in [0, 1]. Single-channel input is replicated to RGB.
Tensor resize(const RawImage& image, std::size_t size = kDefaultImageSize);
Tensor resize(const Tensor& image, std::size_t size = kDefaultImageSize);
/// Decodes and resizes a file; decode failures name the path.
Tensor load_resized(const std::string& path, std::size_t size = kDefaultImageSize);

/// Per-channel mean and population standard deviation over every pixel of
/// every image. Throws DegenerateInputError on a constant channel.
ChannelStats fit_stats(std::span<const Tensor> images);
Tensor standardize(const Tensor& image, const ChannelStats& stats);
Tensor destandardize(const Tensor& image, const ChannelStats& stats);

/// Draws parameters in a fixed order (hflip, vflip, rotation, shear, zoom x,
/// zoom y, shift x, shift y, channel offsets) so the stream position never
/// depends on which ranges are zero.
TransformParams draw_params(const AugmentConfig& cfg, Rng& rng, std::size_t height, std::size_t width);

/// flip → affine → channel offset → clip to [0, 1].
///
/// The affine part maps a source point p (centred coordinates, y up) to
/// rotate(shear(zoom(p + shift))); the output is sampled through the inverse
/// with bilinear interpolation, out-of-frame neighbours reading `fill`.
Tensor apply_transform(const Tensor& image, const TransformParams& params, double fill = 0.0);

Tensor random_transform(const Tensor& image, const AugmentConfig& cfg, Rng& rng);

Tensor flip_horizontal(const Tensor& image);
Tensor flip_vertical(const Tensor& image);

}  // namespace cxr
