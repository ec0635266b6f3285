#include "cxrnet/optim.hpp"

#include <algorithm>
#include <cmath>

#include "cxrnet/errors.hpp"

namespace cxr {

LossResult cross_entropy(const Tensor& probs, const Tensor& labels) {
  if (probs.rank() != 2 || probs.shape() != labels.shape()) {
    throw DimensionError("cross_entropy: probabilities " + shape_str(probs.shape()) + " vs labels " +
                         shape_str(labels.shape()));
  }
  const std::size_t n = probs.dim(0), c = probs.dim(1);
  double total = 0.0;
  Tensor dlogits({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    double row_sum = 0.0, label_sum = 0.0;
    std::size_t hot = c;
    for (std::size_t j = 0; j < c; ++j) {
      const double p = probs[i * c + j];
      const double y = labels[i * c + j];
      row_sum += p;
      label_sum += y;
      if (y == 1.0) hot = j;
      else if (y != 0.0) throw DomainError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    }
    if (std::abs(row_sum - 1.0) > 1e-6) {
      throw DomainError("cross_entropy: probability row " + std::to_string(i) + " sums to " + std::to_string(row_sum));
    }
    if (hot == c || label_sum != 1.0) {
      throw DomainError("cross_entropy: label row " + std::to_string(i) + " is not one-hot");
    }
    total -= std::log(std::max(probs[i * c + hot], kProbabilityFloor));
    for (std::size_t j = 0; j < c; ++j) {
      dlogits[i * c + j] = (probs[i * c + j] - labels[i * c + j]) / static_cast<double>(n);
    }
  }
  return {total / static_cast<double>(n), std::move(dlogits)};
}

void adam_step(AdamState& state, std::vector<ParamRef> params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value->shape() != params[i].grad->shape()) {
      throw DimensionError("adam_step: parameter " + std::to_string(i) + " has shape " +
                           shape_str(params[i].value->shape()) + " but gradient " +
                           shape_str(params[i].grad->shape()));
    }
  }
  if (state.m.empty()) {
    state.m.reserve(params.size());
    state.v.reserve(params.size());
    for (const auto& p : params) {
      state.m.emplace_back(p.value->shape());
      state.v.emplace_back(p.value->shape());
    }
  }
  if (state.m.size() != params.size()) {
    throw DimensionError("adam_step: state tracks " + std::to_string(state.m.size()) + " parameters, got " +
                         std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].shape() != params[i].value->shape()) {
      throw DimensionError("adam_step: moment shape mismatch for parameter " + std::to_string(i));
    }
  }

  state.t += 1;
  const auto& cfg = state.config;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
  const double inv_c1 = 1.0 / c1, inv_c2 = 1.0 / c2;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double* theta = params[i].value->raw();
    const double* g = params[i].grad->raw();
    double* m = state.m[i].raw();
    double* v = state.v[i].raw();
    const std::size_t n = params[i].value->size();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0 - b1) * g[j];
      v[j] = b2 * v[j] + (1.0 - b2) * g[j] * g[j];
      const double m_hat = m[j] * inv_c1;
      const double v_hat = v[j] * inv_c2;
      theta[j] -= cfg.lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace cxr
