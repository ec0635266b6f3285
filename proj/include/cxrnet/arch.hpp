#pragma once

#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxr {

namespace spec {
struct Conv2D {
  std::size_t kernel;
  std::size_t filters;
  friend bool operator==(const Conv2D&, const Conv2D&) = default;
};
struct MaxPool {
  std::size_t pool;
  std::size_t stride;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};
struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};
struct Dense {
  std::size_t units;
  friend bool operator==(const Dense&, const Dense&) = default;
};
struct BatchNorm {
  friend bool operator==(const BatchNorm&, const BatchNorm&) = default;
};
struct Dropout {
  double p;
  friend bool operator==(const Dropout&, const Dropout&) = default;
};
struct SoftmaxOutput {
  std::size_t classes;
  friend bool operator==(const SoftmaxOutput&, const SoftmaxOutput&) = default;
};
}  // namespace spec

using LayerKind = std::variant<spec::Conv2D, spec::MaxPool, spec::Flatten, spec::Dense, spec::BatchNorm,
                               spec::Dropout, spec::SoftmaxOutput>;

struct LayerSpec {
  std::string name;
  LayerKind kind;
  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Short kind tag used in the text format ("conv", "maxpool", ...).
std::string kind_tag(const LayerKind& kind);

struct ArchitectureSpec {
  std::size_t height = 182;
  std::size_t width = 182;
  std::size_t channels = 3;
  std::vector<LayerSpec> layers;
  friend bool operator==(const ArchitectureSpec&, const ArchitectureSpec&) = default;

  std::size_t classes() const;
};

/// Widths of the fully connected tail appended after the last pooling layer.
struct FlatTail {
  std::size_t dense1 = 4096;
  std::size_t dense2 = 4096;
  std::size_t dense3 = 1000;  // followed by batch normalization
  std::size_t dense4 = 256;   // followed by dropout
};

/// VGG16 convolutional base (five blocks of 64/128/256/512/512 filters,
/// 2/2/3/3/3 convolutions, MaxPool(2,2) after each) plus the flat tail and a
/// softmax output, with Table-style names (2D-Conv_111, Pool_11, Layer_11, ...).
ArchitectureSpec vgg16_spec(std::size_t classes = 3, double dropout = 0.3, std::size_t height = 182,
                            std::size_t width = 182, std::size_t channels = 3);
/// VGG16 plus one extra convolution at the end of blocks 3, 4 and 5
/// (2D-Conv_134, 2D-Conv_144, 2D-Conv_154).
ArchitectureSpec vgg19_spec(std::size_t classes = 3, double dropout = 0.3, std::size_t height = 182,
                            std::size_t width = 182, std::size_t channels = 3);
/// Two VGG blocks (two convolutions each) of the given widths plus the flat
/// tail. Used for desk-scale experiments.
ArchitectureSpec mini_vgg_spec(std::size_t classes = 3, double dropout = 0.3, std::size_t height = 32,
                               std::size_t width = 32, std::size_t block1 = 16, std::size_t block2 = 32,
                               FlatTail tail = {});

/// Builds a spec by name: "vgg16", "vgg19" or "mini-vgg".
ArchitectureSpec named_spec(const std::string& name, std::size_t classes, double dropout, std::size_t height,
                            std::size_t width);
bool is_named_spec(const std::string& name);

/// Per-layer output shapes (batch dimension omitted). Throws SpecError naming
/// the first layer that cannot chain.
std::vector<Shape> infer_shapes(const ArchitectureSpec& spec);

struct LayerParamCount {
  std::string name;
  std::string kind;
  Shape output_shape;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  std::size_t total() const { return trainable + non_trainable; }
};

struct ParamCount {
  std::vector<LayerParamCount> layers;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
  std::size_t total() const { return trainable + non_trainable; }
};

/// Closed-form counts: conv k²·Cin·Cout + Cout; dense and softmax output
/// f·n + n; batch norm 2f trainable plus 2f running statistics.
ParamCount count_params(const ArchitectureSpec& spec);

/// Text format, one layer per line after an `input HxWxC` header:
///   2D-Conv_111 conv(3,64)
///   Pool_11 maxpool(2,2)
///   Flat_11 flatten
///   Layer_11 dense(4096)
///   Norm_11 batchnorm
///   Drop_11 dropout(0.3)
///   Out_1 softmax(3)
/// Blank lines and `#` comments are ignored.
std::string format_spec(const ArchitectureSpec& spec);
ArchitectureSpec parse_spec(const std::string& text);
ArchitectureSpec load_spec_file(const std::filesystem::path& path);

/// Checks unique names, legal arguments, chaining and a final softmax output.
void validate_spec(const ArchitectureSpec& spec);

}  // namespace cxr
