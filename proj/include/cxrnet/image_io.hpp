#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxr {

/// Decoded 8-bit image, interleaved, 1 or 3 channels.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::size_t channels = 0;
  std::vector<std::uint8_t> pixels;
};

/// Decodes a PNG or JPEG file (chosen by content signature). Grayscale stays
/// single-channel; everything else decodes to RGB. Throws InputError naming
/// the path on failure.
RawImage read_image(const std::string& path);

/// Writes an 8-bit RGB or gray PNG.
void write_png(const std::string& path, const RawImage& image);

/// H×W×C tensor with values in [0, 1] from raw pixels.
Tensor to_tensor(const RawImage& image);
/// Inverse of to_tensor; values are clipped to [0, 1] and rounded.
RawImage from_tensor(const Tensor& image);

}  // namespace cxr
