#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "cxrnet/arch.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/optim.hpp"

namespace cxr {

/// Runnable network: an ordered list of layers built from a spec.
class Model {
 public:
  /// Instantiates every layer and draws initial parameters from `rng`
  /// (He-uniform weights, zero biases, unit/zero batch-norm state).
  static Model build(const ArchitectureSpec& spec, Rng& rng);

  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;

  const ArchitectureSpec& spec() const noexcept { return spec_; }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  Layer& layer(std::size_t i) { return *layers_.at(i); }
  const Layer& layer(std::size_t i) const { return *layers_.at(i); }
  Layer& layer(const std::string& name);

  /// N×H×W×C batch to N×classes softmax probabilities. `rng` drives dropout
  /// in Train mode and may be null in Infer mode.
  Tensor forward(const Tensor& x, Mode mode, Rng* rng = nullptr);
  /// Back-propagates the gradient with respect to the output logits and
  /// returns the gradient with respect to the input batch.
  Tensor backward(const Tensor& dlogits);

  /// Trainable parameters with their latest gradients, in layer order and
  /// then parameter-name order. Requires a completed backward pass.
  std::vector<ParamRef> parameters();
  std::size_t parameter_count() const;

  void save_checkpoint(std::ostream& out) const;
  void save_checkpoint(const std::filesystem::path& path) const;
  /// Overwrites matching params/buffers; shapes and names must agree.
  void load_checkpoint(std::istream& in);
  void load_checkpoint(const std::filesystem::path& path);
  /// The full checkpoint byte stream; equal models give equal bytes.
  std::string checkpoint_bytes() const;

 private:
  Model() = default;
  ArchitectureSpec spec_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

}  // namespace cxr
