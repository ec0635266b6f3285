#pragma once

#include <cstdint>
#include <vector>

#include "cxrnet/tensor.hpp"

namespace cxr {

struct LossResult {
  double loss;
  /// Gradient with respect to the pre-softmax logits: (probs − labels) / N.
  Tensor dlogits;
};

inline constexpr double kProbabilityFloor = 1e-12;

/// Mean categorical cross-entropy of softmax outputs against one-hot labels.
/// Throws DomainError when a probability row does not sum to 1 within 1e-6
/// or a label row is not one-hot.
LossResult cross_entropy(const Tensor& probs, const Tensor& labels);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Optimizer state. Moment tensors are created on the first step and are
/// aligned by position with the parameter list passed to adam_step.
struct AdamState {
  AdamConfig config;
  std::uint64_t t = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
};

struct ParamRef {
  Tensor* value;
  const Tensor* grad;
};

/// One bias-corrected Adam update over all parameters, in list order.
void adam_step(AdamState& state, std::vector<ParamRef> params);

}  // namespace cxr
