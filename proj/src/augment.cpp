#include "cxrnet/augment.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "cxrnet/errors.hpp"

namespace cxr {

AugmentConfig AugmentConfig::identity() {
  AugmentConfig cfg;
  cfg.rotation_deg = 0.0;
  cfg.width_shift_frac = 0.0;
  cfg.height_shift_frac = 0.0;
  cfg.shear_deg_ccw = 0.0;
  cfg.zoom_frac = 0.0;
  cfg.channel_shift = 0.0;
  cfg.hflip = false;
  cfg.vflip = false;
  return cfg;
}

void AugmentConfig::validate() const {
  auto frac = [](double v, const char* name) {
    if (!(v >= 0.0 && v < 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1), got " + std::to_string(v));
  };
  frac(width_shift_frac, "width_shift");
  frac(height_shift_frac, "height_shift");
  frac(zoom_frac, "zoom");
  frac(channel_shift, "channel_shift");
  if (!(rotation_deg >= 0.0 && rotation_deg <= 180.0)) {
    throw ConfigError("rotation_deg must lie in [0, 180], got " + std::to_string(rotation_deg));
  }
  if (!(shear_deg_ccw >= 0.0 && shear_deg_ccw < 90.0)) {
    throw ConfigError("shear_deg must lie in [0, 90), got " + std::to_string(shear_deg_ccw));
  }
  if (!std::isfinite(fill)) throw ConfigError("fill must be finite");
}

namespace {

double clamp_index(double v, std::size_t n) { return std::clamp(v, 0.0, static_cast<double>(n - 1)); }

}  // namespace

Tensor resize(const Tensor& image, std::size_t size) {
  if (image.rank() != 3 || (image.dim(2) != 1 && image.dim(2) != 3)) {
    throw DimensionError("resize: expected H x W x {1,3}, got " + shape_str(image.shape()));
  }
  if (size == 0) throw DomainError("resize: target size must be positive");
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  const double sy = static_cast<double>(h) / static_cast<double>(size);
  const double sx = static_cast<double>(w) / static_cast<double>(size);
  Tensor out({size, size, 3});
  for (std::size_t r = 0; r < size; ++r) {
    const double fy = clamp_index((static_cast<double>(r) + 0.5) * sy - 0.5, h);
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, h - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t col = 0; col < size; ++col) {
      const double fx = clamp_index((static_cast<double>(col) + 0.5) * sx - 0.5, w);
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, w - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t ch = 0; ch < 3; ++ch) {
        const std::size_t sc = c == 1 ? 0 : ch;
        const double v00 = image[(y0 * w + x0) * c + sc], v01 = image[(y0 * w + x1) * c + sc];
        const double v10 = image[(y1 * w + x0) * c + sc], v11 = image[(y1 * w + x1) * c + sc];
        double v = v00;
        if (wx != 0.0 || wy != 0.0) {
          v = (1.0 - wy) * ((1.0 - wx) * v00 + wx * v01) + wy * ((1.0 - wx) * v10 + wx * v11);
        }
        out[(r * size + col) * 3 + ch] = v;
      }
    }
  }
  return out;
}

Tensor resize(const RawImage& image, std::size_t size) {
  if (image.width == 0 || image.height == 0) throw DimensionError("resize: empty image");
  if (image.channels != 1 && image.channels != 3) {
    throw DimensionError("resize: unsupported channel count " + std::to_string(image.channels));
  }
  return resize(to_tensor(image), size);
}

Tensor load_resized(const std::string& path, std::size_t size) { return resize(read_image(path), size); }

ChannelStats fit_stats(std::span<const Tensor> images) {
  if (images.empty()) throw DomainError("fit_stats: empty training set");
  // Welford accumulation per channel.
  std::array<double, 3> mean{}, m2{};
  std::array<double, 3> count{};
  for (const auto& img : images) {
    if (img.rank() != 3 || img.dim(2) != 3) {
      throw DimensionError("fit_stats: expected H x W x 3 images, got " + shape_str(img.shape()));
    }
    for (std::size_t i = 0; i < img.size(); ++i) {
      const std::size_t ch = i % 3;
      count[ch] += 1.0;
      const double delta = img[i] - mean[ch];
      mean[ch] += delta / count[ch];
      m2[ch] += delta * (img[i] - mean[ch]);
    }
  }
  ChannelStats stats;
  for (std::size_t ch = 0; ch < 3; ++ch) {
    stats.mean[ch] = mean[ch];
    stats.std[ch] = std::sqrt(m2[ch] / count[ch]);
    if (!(stats.std[ch] > 0.0)) {
      throw DegenerateInputError("fit_stats: channel " + std::to_string(ch) + " has zero variance");
    }
  }
  return stats;
}

Tensor standardize(const Tensor& image, const ChannelStats& stats) {
  if (image.rank() != 3 || image.dim(2) != 3) {
    throw DimensionError("standardize: expected H x W x 3, got " + shape_str(image.shape()));
  }
  Tensor out = image;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - stats.mean[i % 3]) / stats.std[i % 3];
  return out;
}

Tensor destandardize(const Tensor& image, const ChannelStats& stats) {
  Tensor out = image;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * stats.std[i % 3] + stats.mean[i % 3];
  return out;
}

TransformParams draw_params(const AugmentConfig& cfg, Rng& rng, std::size_t height, std::size_t width) {
  TransformParams p;
  const bool hf = rng.bernoulli(0.5);
  const bool vf = rng.bernoulli(0.5);
  p.hflip = cfg.hflip && hf;
  p.vflip = cfg.vflip && vf;
  p.rotation_deg = rng.uniform(-cfg.rotation_deg, cfg.rotation_deg);
  p.shear_deg = rng.uniform(0.0, cfg.shear_deg_ccw);
  p.zoom_x = rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac);
  p.zoom_y = rng.uniform(1.0 - cfg.zoom_frac, 1.0 + cfg.zoom_frac);
  p.shift_x = rng.uniform(-cfg.width_shift_frac, cfg.width_shift_frac) * static_cast<double>(width);
  p.shift_y = rng.uniform(-cfg.height_shift_frac, cfg.height_shift_frac) * static_cast<double>(height);
  for (auto& off : p.channel_offset) off = rng.uniform(-cfg.channel_shift, cfg.channel_shift);
  return p;
}

Tensor flip_horizontal(const Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      for (std::size_t ch = 0; ch < c; ++ch) out[(r * w + col) * c + ch] = image[(r * w + (w - 1 - col)) * c + ch];
    }
  }
  return out;
}

Tensor flip_vertical(const Tensor& image) {
  const std::size_t h = image.dim(0), w = image.dim(1), c = image.dim(2);
  Tensor out(image.shape());
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t i = 0; i < w * c; ++i) out[r * w * c + i] = image[(h - 1 - r) * w * c + i];
  }
  return out;
}

Tensor apply_transform(const Tensor& image, const TransformParams& params, double fill) {
  if (image.rank() != 3) throw DimensionError("apply_transform: expected H x W x C, got " + shape_str(image.shape()));
  Tensor src = image;
  if (params.hflip) src = flip_horizontal(src);
  if (params.vflip) src = flip_vertical(src);

  const std::size_t h = src.dim(0), w = src.dim(1), c = src.dim(2);
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double th = params.rotation_deg * kDeg, ph = params.shear_deg * kDeg;
  const double ct = std::cos(th), st = std::sin(th);
  const double cp = std::cos(ph), sp = std::sin(ph);
  // Inverse of rotate·shear·zoom, i.e. zoom⁻¹ · shear⁻¹ · rotate⁻¹.
  const double r00 = ct, r01 = st, r10 = -st, r11 = ct;
  const double s00 = r00 + (sp / cp) * r10, s01 = r01 + (sp / cp) * r11;
  const double s10 = r10 / cp, s11 = r11 / cp;
  const double a00 = s00 / params.zoom_x, a01 = s01 / params.zoom_x;
  const double a10 = s10 / params.zoom_y, a11 = s11 / params.zoom_y;
  const double tx = params.shift_x, ty = -params.shift_y;

  const double cx = (static_cast<double>(w) - 1.0) / 2.0;
  const double cy = (static_cast<double>(h) - 1.0) / 2.0;
  Tensor out(src.shape());
  const auto in_frame = [&](std::ptrdiff_t y, std::ptrdiff_t x) {
    return y >= 0 && x >= 0 && y < static_cast<std::ptrdiff_t>(h) && x < static_cast<std::ptrdiff_t>(w);
  };
  for (std::size_t r = 0; r < h; ++r) {
    for (std::size_t col = 0; col < w; ++col) {
      const double x = static_cast<double>(col) - cx;
      const double y = cy - static_cast<double>(r);
      const double sx = a00 * x + a01 * y - tx;
      const double sy = a10 * x + a11 * y - ty;
      const double fx = sx + cx;
      const double fy = cy - sy;
      const double x0f = std::floor(fx), y0f = std::floor(fy);
      const double wx = fx - x0f, wy = fy - y0f;
      const auto x0 = static_cast<std::ptrdiff_t>(x0f), y0 = static_cast<std::ptrdiff_t>(y0f);
      for (std::size_t ch = 0; ch < c; ++ch) {
        const auto px = [&](std::ptrdiff_t yy, std::ptrdiff_t xx) {
          return in_frame(yy, xx) ? src[(static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * c + ch]
                                  : fill;
        };
        double v = (1.0 - wy) * (1.0 - wx) * px(y0, x0);
        if (wx != 0.0) v += (1.0 - wy) * wx * px(y0, x0 + 1);
        if (wy != 0.0) v += wy * (1.0 - wx) * px(y0 + 1, x0);
        if (wx != 0.0 && wy != 0.0) v += wy * wx * px(y0 + 1, x0 + 1);
        out[(r * w + col) * c + ch] = v;
      }
    }
  }

  for (std::size_t i = 0; i < out.size(); ++i) {
    const double off = i % c < 3 ? params.channel_offset[i % c] : 0.0;
    out[i] = std::clamp(out[i] + off, 0.0, 1.0);
  }
  return out;
}

Tensor random_transform(const Tensor& image, const AugmentConfig& cfg, Rng& rng) {
  if (image.rank() != 3) throw DimensionError("random_transform: expected H x W x C, got " + shape_str(image.shape()));
  const TransformParams params = draw_params(cfg, rng, image.dim(0), image.dim(1));
  return apply_transform(image, params, cfg.fill);
}

}  // namespace cxr
