#pragma once

#include <map>
#include <memory>
#include <string>

#include "cxrnet/rng.hpp"
#include "cxrnet/tensor.hpp"

namespace cxr {

enum class Mode { Train, Infer };

/// Parameters, their gradients, non-trainable buffers and the activations a
/// layer keeps between forward and backward.
///
/// Only conv, dense, output and batch-norm layers own params. Running
/// statistics live in `buffers` and are never touched by the optimizer.
/// `cache` is filled by a Train-mode forward and consumed by backward.
struct LayerState {
  std::map<std::string, Tensor> params;
  std::map<std::string, Tensor> grads;
  std::map<std::string, Tensor> buffers;
  std::map<std::string, Tensor> cache;
};

inline constexpr double kBatchNormEpsilon = 1e-3;
inline constexpr double kBatchNormMomentum = 0.99;

// Free-function kernels. Shapes: conv/pool operate on N×H×W×C batches,
// dense/batch-norm on N×F. Forward passes in Train mode populate the cache;
// backward passes consume it and raise StateError when it is missing.

/// Same-padded stride-1 convolution with fused ReLU. Weights are k×k×Cin×Cout.
Tensor conv2d_forward(const Tensor& x, LayerState& state, Mode mode);
Tensor conv2d_backward(const Tensor& dy, LayerState& state);

Tensor maxpool_forward(const Tensor& x, LayerState& state, std::size_t pool, std::size_t stride, Mode mode);
Tensor maxpool_backward(const Tensor& dy, LayerState& state);

/// x·W + b, followed by ReLU when `apply_relu`. W is F×n.
Tensor dense_forward(const Tensor& x, LayerState& state, Mode mode, bool apply_relu = true);
Tensor dense_backward(const Tensor& dy, LayerState& state);

/// Train: batch statistics plus a running-average update. Infer: running
/// statistics. Variance is the biased (divide-by-N) batch variance.
Tensor batchnorm_forward(const Tensor& x, LayerState& state, Mode mode,
                         double epsilon = kBatchNormEpsilon, double momentum = kBatchNormMomentum);
Tensor batchnorm_backward(const Tensor& dy, LayerState& state);

/// Inverted dropout. Infer mode (or p == 0) is the identity.
Tensor dropout_forward(const Tensor& x, LayerState& state, double p, Mode mode, Rng* rng);
Tensor dropout_backward(const Tensor& dy, LayerState& state);

/// Row-wise softmax with max subtraction.
Tensor softmax(const Tensor& x);

/// Polymorphic layer wrapper used by the model runner.
class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  const std::string& name() const noexcept { return name_; }
  LayerState& state() noexcept { return state_; }
  const LayerState& state() const noexcept { return state_; }
  bool trainable() const noexcept { return !state_.params.empty(); }

  virtual Tensor forward(const Tensor& x, Mode mode, Rng* rng) = 0;
  virtual Tensor backward(const Tensor& dy) = 0;
  /// Draws fresh parameters; parameterless layers ignore the call.
  virtual void initialize(Rng& /*rng*/) {}

 protected:
  std::string name_;
  LayerState state_;
};

class Conv2DLayer final : public Layer {
 public:
  Conv2DLayer(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;
  void initialize(Rng& rng) override;
};

class MaxPoolLayer final : public Layer {
 public:
  MaxPoolLayer(std::string name, std::size_t pool, std::size_t stride);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;

 private:
  std::size_t pool_, stride_;
};

class FlattenLayer final : public Layer {
 public:
  using Layer::Layer;
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;

 private:
  Shape input_shape_;
};

class DenseLayer final : public Layer {
 public:
  DenseLayer(std::string name, std::size_t in_features, std::size_t units);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;
  void initialize(Rng& rng) override;
};

class BatchNormLayer final : public Layer {
 public:
  BatchNormLayer(std::string name, std::size_t features);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;
  void initialize(Rng& rng) override;
};

class DropoutLayer final : public Layer {
 public:
  DropoutLayer(std::string name, double p);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dy) override;

 private:
  double p_;
};

/// Dense layer to `classes` logits followed by softmax. Backward expects the
/// gradient with respect to the logits (softmax is fused with the loss).
class SoftmaxOutputLayer final : public Layer {
 public:
  SoftmaxOutputLayer(std::string name, std::size_t in_features, std::size_t classes);
  Tensor forward(const Tensor& x, Mode mode, Rng* rng) override;
  Tensor backward(const Tensor& dlogits) override;
  void initialize(Rng& rng) override;
};

/// He-uniform draw: U(-sqrt(6/fan_in), +sqrt(6/fan_in)).
Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng);

}  // namespace cxr
