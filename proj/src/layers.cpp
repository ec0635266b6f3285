#include "cxrnet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "cxrnet/errors.hpp"

namespace cxr {

namespace {

const Tensor& param(const LayerState& s, const char* key) {
  auto it = s.params.find(key);
  if (it == s.params.end()) throw StateError(std::string("missing parameter '") + key + "'");
  return it->second;
}

const Tensor& cached(const LayerState& s, const char* key, const char* op) {
  auto it = s.cache.find(key);
  if (it == s.cache.end()) {
    throw StateError(std::string(op) + ": no cached activations; call forward in Train mode first");
  }
  return it->second;
}

void require_rank(const Tensor& x, std::size_t rank, const char* op) {
  if (x.rank() != rank) {
    throw DimensionError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                         shape_str(x.shape()));
  }
}

// Copies sample n of a batch into its own tensor.
Tensor sample(const Tensor& batch, std::size_t n) {
  Shape inner(batch.shape().begin() + 1, batch.shape().end());
  const std::size_t len = shape_numel(inner);
  std::vector<double> data(batch.raw() + n * len, batch.raw() + (n + 1) * len);
  return Tensor(std::move(inner), std::move(data));
}

void mask_relu_grad(Tensor& dy, const Tensor& y) {
  for (std::size_t i = 0; i < dy.size(); ++i) {
    if (!(y[i] > 0.0)) dy[i] = 0.0;
  }
}

}  // namespace

Tensor conv2d_forward(const Tensor& x, LayerState& state, Mode mode) {
  require_rank(x, 4, "conv2d");
  const Tensor& w = param(state, "W");
  const Tensor& b = param(state, "b");
  const std::size_t k = w.dim(0), cin = w.dim(2), cout = w.dim(3);
  if (x.dim(3) != cin) {
    throw DimensionError("conv2d: input has " + std::to_string(x.dim(3)) + " channels, weights " +
                         shape_str(w.shape()) + " expect " + std::to_string(cin));
  }
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t pad = k / 2;
  const std::size_t ho = window_extent(h, k, pad, 1), wo = window_extent(wd, k, pad, 1);
  const Tensor w2 = w.reshape({k * k * cin, cout});

  Tensor y({n, ho, wo, cout});
  for (std::size_t s = 0; s < n; ++s) {
    Tensor out = matmul(im2col(sample(x, s), k, pad, 1), w2);
    double* dst = y.raw() + s * ho * wo * cout;
    for (std::size_t r = 0; r < ho * wo; ++r) {
      for (std::size_t c = 0; c < cout; ++c) {
        const double v = out[r * cout + c] + b[c];
        dst[r * cout + c] = v > 0.0 ? v : 0.0;
      }
    }
  }
  if (mode == Mode::Train) {
    state.cache["x"] = x;
    state.cache["y"] = y;
  } else {
    state.cache.clear();
  }
  return y;
}

Tensor conv2d_backward(const Tensor& dy_in, LayerState& state) {
  const Tensor& x = cached(state, "x", "conv2d_backward");
  const Tensor& y = cached(state, "y", "conv2d_backward");
  if (dy_in.shape() != y.shape()) {
    throw DimensionError("conv2d_backward: gradient " + shape_str(dy_in.shape()) + " does not match output " +
                         shape_str(y.shape()));
  }
  const Tensor& w = param(state, "W");
  const std::size_t k = w.dim(0), cin = w.dim(2), cout = w.dim(3);
  const std::size_t n = x.dim(0), h = x.dim(1), wd = x.dim(2);
  const std::size_t pad = k / 2;
  const std::size_t ho = y.dim(1), wo = y.dim(2);

  Tensor dy = dy_in;
  mask_relu_grad(dy, y);
  const Tensor w2t = transpose(w.reshape({k * k * cin, cout}));

  Tensor dw({k * k * cin, cout});
  Tensor db({cout});
  Tensor dx(x.shape());
  for (std::size_t s = 0; s < n; ++s) {
    Tensor dys({ho * wo, cout},
               std::vector<double>(dy.raw() + s * ho * wo * cout, dy.raw() + (s + 1) * ho * wo * cout));
    const Tensor cols = im2col(sample(x, s), k, pad, 1);
    dw = dw + matmul_tn(cols, dys);
    for (std::size_t r = 0; r < ho * wo; ++r) {
      for (std::size_t c = 0; c < cout; ++c) db[c] += dys[r * cout + c];
    }
    const Tensor dxs = col2im(matmul(dys, w2t), h, wd, cin, k, pad, 1);
    std::memcpy(dx.raw() + s * dxs.size(), dxs.raw(), dxs.size() * sizeof(double));
  }
  state.grads["W"] = std::move(dw).reshape(w.shape());
  state.grads["b"] = std::move(db);
  state.cache.clear();
  return dx;
}

Tensor maxpool_forward(const Tensor& x, LayerState& state, std::size_t pool, std::size_t stride, Mode mode) {
  require_rank(x, 4, "maxpool");
  const std::size_t n = x.dim(0), h = x.dim(1), w = x.dim(2), c = x.dim(3);
  if (h < pool || w < pool) {
    throw DimensionError("maxpool: input " + shape_str(x.shape()) + " smaller than pool " + std::to_string(pool));
  }
  const std::size_t ho = window_extent(h, pool, 0, stride), wo = window_extent(w, pool, 0, stride);
  Tensor y({n, ho, wo, c});
  Tensor argmax({n, ho, wo, c});
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        for (std::size_t ch = 0; ch < c; ++ch) {
          double best = -std::numeric_limits<double>::infinity();
          std::size_t best_idx = 0;
          bool first = true;
          // Strict comparison keeps the first index among ties.
          for (std::size_t py = 0; py < pool; ++py) {
            for (std::size_t px = 0; px < pool; ++px) {
              const std::size_t idx = ((s * h + oy * stride + py) * w + ox * stride + px) * c + ch;
              if (first || x[idx] > best) {
                best = x[idx];
                best_idx = idx;
                first = false;
              }
            }
          }
          const std::size_t o = ((s * ho + oy) * wo + ox) * c + ch;
          y[o] = best;
          argmax[o] = static_cast<double>(best_idx);
        }
      }
    }
  }
  if (mode == Mode::Train) {
    state.cache["argmax"] = std::move(argmax);
    state.cache["input_shape"] = Tensor({4}, {double(n), double(h), double(w), double(c)});
  } else {
    state.cache.clear();
  }
  return y;
}

Tensor maxpool_backward(const Tensor& dy, LayerState& state) {
  const Tensor& argmax = cached(state, "argmax", "maxpool_backward");
  const Tensor& in_shape = cached(state, "input_shape", "maxpool_backward");
  if (dy.shape() != argmax.shape()) {
    throw DimensionError("maxpool_backward: gradient " + shape_str(dy.shape()) + " does not match output " +
                         shape_str(argmax.shape()));
  }
  Tensor dx(Shape{std::size_t(in_shape[0]), std::size_t(in_shape[1]), std::size_t(in_shape[2]),
                  std::size_t(in_shape[3])});
  for (std::size_t o = 0; o < dy.size(); ++o) dx[static_cast<std::size_t>(argmax[o])] += dy[o];
  state.cache.clear();
  return dx;
}

Tensor dense_forward(const Tensor& x, LayerState& state, Mode mode, bool apply_relu) {
  require_rank(x, 2, "dense");
  const Tensor& w = param(state, "W");
  const Tensor& b = param(state, "b");
  if (x.dim(1) != w.dim(0)) {
    throw DimensionError("dense: input " + shape_str(x.shape()) + " does not match weights " + shape_str(w.shape()));
  }
  Tensor y = matmul(x, w);
  const std::size_t n = y.dim(0), units = y.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < units; ++j) {
      double& v = y[i * units + j];
      v += b[j];
      if (apply_relu && !(v > 0.0)) v = 0.0;
    }
  }
  if (mode == Mode::Train) {
    state.cache["x"] = x;
    if (apply_relu) state.cache["y"] = y;
    else state.cache.erase("y");
  } else {
    state.cache.clear();
  }
  return y;
}

Tensor dense_backward(const Tensor& dy_in, LayerState& state) {
  const Tensor& x = cached(state, "x", "dense_backward");
  const Tensor& w = param(state, "W");
  if (dy_in.rank() != 2 || dy_in.dim(0) != x.dim(0) || dy_in.dim(1) != w.dim(1)) {
    throw DimensionError("dense_backward: gradient " + shape_str(dy_in.shape()) + " does not match layer");
  }
  Tensor dy = dy_in;
  if (auto it = state.cache.find("y"); it != state.cache.end()) mask_relu_grad(dy, it->second);
  matmul_tn_into(x, dy, state.grads["W"]);
  state.grads["b"] = reduce(dy, {0}, ReduceKind::Sum);
  Tensor dx = matmul_nt(dy, w);
  state.cache.clear();
  return dx;
}

Tensor batchnorm_forward(const Tensor& x, LayerState& state, Mode mode, double epsilon, double momentum) {
  require_rank(x, 2, "batchnorm");
  const Tensor& gamma = param(state, "gamma");
  const Tensor& beta = param(state, "beta");
  const std::size_t n = x.dim(0), f = x.dim(1);
  if (gamma.size() != f) {
    throw DimensionError("batchnorm: input " + shape_str(x.shape()) + " vs " + std::to_string(gamma.size()) +
                         " features");
  }
  Tensor& run_mean = state.buffers.at("running_mean");
  Tensor& run_var = state.buffers.at("running_var");
  Tensor y({n, f});

  if (mode == Mode::Infer) {
    for (std::size_t j = 0; j < f; ++j) {
      const double inv = 1.0 / std::sqrt(run_var[j] + epsilon);
      for (std::size_t i = 0; i < n; ++i) {
        y[i * f + j] = (x[i * f + j] - run_mean[j]) * inv * gamma[j] + beta[j];
      }
    }
    state.cache.clear();
    return y;
  }

  if (n < 2) throw DomainError("batchnorm: Train mode needs at least 2 samples, got " + std::to_string(n));
  Tensor xhat({n, f});
  Tensor inv_std({f});
  for (std::size_t j = 0; j < f; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += x[i * f + j];
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = x[i * f + j] - mean;
      var += d * d;
    }
    var /= static_cast<double>(n);
    const double inv = 1.0 / std::sqrt(var + epsilon);
    inv_std[j] = inv;
    for (std::size_t i = 0; i < n; ++i) {
      const double xh = (x[i * f + j] - mean) * inv;
      xhat[i * f + j] = xh;
      y[i * f + j] = xh * gamma[j] + beta[j];
    }
    run_mean[j] = momentum * run_mean[j] + (1.0 - momentum) * mean;
    run_var[j] = momentum * run_var[j] + (1.0 - momentum) * var;
  }
  state.cache["xhat"] = std::move(xhat);
  state.cache["inv_std"] = std::move(inv_std);
  return y;
}

Tensor batchnorm_backward(const Tensor& dy, LayerState& state) {
  const Tensor& xhat = cached(state, "xhat", "batchnorm_backward");
  const Tensor& inv_std = cached(state, "inv_std", "batchnorm_backward");
  if (dy.shape() != xhat.shape()) {
    throw DimensionError("batchnorm_backward: gradient " + shape_str(dy.shape()) + " vs " + shape_str(xhat.shape()));
  }
  const Tensor& gamma = param(state, "gamma");
  const std::size_t n = dy.dim(0), f = dy.dim(1);
  Tensor dgamma({f}), dbeta({f}), dx({n, f});
  for (std::size_t j = 0; j < f; ++j) {
    double sum_dy = 0.0, sum_dy_xhat = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      sum_dy += dy[i * f + j];
      sum_dy_xhat += dy[i * f + j] * xhat[i * f + j];
    }
    dgamma[j] = sum_dy_xhat;
    dbeta[j] = sum_dy;
    const double scale = gamma[j] * inv_std[j] / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
      dx[i * f + j] =
          scale * (static_cast<double>(n) * dy[i * f + j] - sum_dy - xhat[i * f + j] * sum_dy_xhat);
    }
  }
  state.grads["gamma"] = std::move(dgamma);
  state.grads["beta"] = std::move(dbeta);
  state.cache.clear();
  return dx;
}

Tensor dropout_forward(const Tensor& x, LayerState& state, double p, Mode mode, Rng* rng) {
  if (!(p >= 0.0) || p >= 1.0) throw DomainError("dropout: p must lie in [0, 1), got " + std::to_string(p));
  if (mode == Mode::Infer || p == 0.0) {
    if (mode == Mode::Train) state.cache["mask"] = Tensor(x.shape(), 1.0);
    else state.cache.clear();
    return x;
  }
  if (rng == nullptr) throw StateError("dropout: Train mode requires a random stream");
  const double keep_scale = 1.0 / (1.0 - p);
  Tensor mask(x.shape());
  Tensor y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mask[i] = rng->uniform() < p ? 0.0 : keep_scale;
    y[i] = x[i] * mask[i];
  }
  state.cache["mask"] = std::move(mask);
  return y;
}

Tensor dropout_backward(const Tensor& dy, LayerState& state) {
  const Tensor& mask = cached(state, "mask", "dropout_backward");
  Tensor dx = hadamard(dy, mask);
  state.cache.clear();
  return dx;
}

Tensor softmax(const Tensor& x) {
  require_rank(x, 2, "softmax");
  const std::size_t n = x.dim(0), c = x.dim(1);
  if (c < 2) throw DimensionError("softmax: need at least 2 classes");
  Tensor y({n, c});
  for (std::size_t i = 0; i < n; ++i) {
    const double* row = x.raw() + i * c;
    double* out = y.raw() + i * c;
    const double mx = *std::max_element(row, row + c);
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      out[j] = std::exp(row[j] - mx);
      sum += out[j];
    }
    for (std::size_t j = 0; j < c; ++j) out[j] /= sum;
  }
  return y;
}

Tensor he_uniform(Shape shape, std::size_t fan_in, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  return rng.uniform_tensor(std::move(shape), -limit, limit);
}

Conv2DLayer::Conv2DLayer(std::string name, std::size_t kernel, std::size_t in_channels, std::size_t out_channels)
    : Layer(std::move(name)) {
  state_.params["W"] = Tensor({kernel, kernel, in_channels, out_channels});
  state_.params["b"] = Tensor({out_channels});
}

Tensor Conv2DLayer::forward(const Tensor& x, Mode mode, Rng*) { return conv2d_forward(x, state_, mode); }
Tensor Conv2DLayer::backward(const Tensor& dy) { return conv2d_backward(dy, state_); }

void Conv2DLayer::initialize(Rng& rng) {
  const Shape shape = state_.params["W"].shape();
  state_.params["W"] = he_uniform(shape, shape[0] * shape[1] * shape[2], rng);
  state_.params["b"].fill(0.0);
}

MaxPoolLayer::MaxPoolLayer(std::string name, std::size_t pool, std::size_t stride)
    : Layer(std::move(name)), pool_(pool), stride_(stride) {}

Tensor MaxPoolLayer::forward(const Tensor& x, Mode mode, Rng*) {
  return maxpool_forward(x, state_, pool_, stride_, mode);
}
Tensor MaxPoolLayer::backward(const Tensor& dy) { return maxpool_backward(dy, state_); }

Tensor FlattenLayer::forward(const Tensor& x, Mode, Rng*) {
  if (x.rank() < 2) throw DimensionError("flatten: expected a batched tensor, got " + shape_str(x.shape()));
  input_shape_ = x.shape();
  return x.reshape({x.dim(0), x.size() / x.dim(0)});
}

Tensor FlattenLayer::backward(const Tensor& dy) {
  if (input_shape_.empty()) throw StateError("flatten_backward: no matching forward");
  return dy.reshape(input_shape_);
}

DenseLayer::DenseLayer(std::string name, std::size_t in_features, std::size_t units) : Layer(std::move(name)) {
  state_.params["W"] = Tensor({in_features, units});
  state_.params["b"] = Tensor({units});
}

Tensor DenseLayer::forward(const Tensor& x, Mode mode, Rng*) { return dense_forward(x, state_, mode, true); }
Tensor DenseLayer::backward(const Tensor& dy) { return dense_backward(dy, state_); }

void DenseLayer::initialize(Rng& rng) {
  const Shape shape = state_.params["W"].shape();
  state_.params["W"] = he_uniform(shape, shape[0], rng);
  state_.params["b"].fill(0.0);
}

BatchNormLayer::BatchNormLayer(std::string name, std::size_t features) : Layer(std::move(name)) {
  state_.params["gamma"] = Tensor({features}, 1.0);
  state_.params["beta"] = Tensor({features}, 0.0);
  state_.buffers["running_mean"] = Tensor({features}, 0.0);
  state_.buffers["running_var"] = Tensor({features}, 1.0);
}

Tensor BatchNormLayer::forward(const Tensor& x, Mode mode, Rng*) { return batchnorm_forward(x, state_, mode); }
Tensor BatchNormLayer::backward(const Tensor& dy) { return batchnorm_backward(dy, state_); }

void BatchNormLayer::initialize(Rng&) {
  state_.params["gamma"].fill(1.0);
  state_.params["beta"].fill(0.0);
  state_.buffers["running_mean"].fill(0.0);
  state_.buffers["running_var"].fill(1.0);
}

DropoutLayer::DropoutLayer(std::string name, double p) : Layer(std::move(name)), p_(p) {
  if (!(p >= 0.0) || p >= 1.0) throw DomainError("dropout: p must lie in [0, 1), got " + std::to_string(p));
}

Tensor DropoutLayer::forward(const Tensor& x, Mode mode, Rng* rng) {
  return dropout_forward(x, state_, p_, mode, rng);
}
Tensor DropoutLayer::backward(const Tensor& dy) { return dropout_backward(dy, state_); }

SoftmaxOutputLayer::SoftmaxOutputLayer(std::string name, std::size_t in_features, std::size_t classes)
    : Layer(std::move(name)) {
  state_.params["W"] = Tensor({in_features, classes});
  state_.params["b"] = Tensor({classes});
}

Tensor SoftmaxOutputLayer::forward(const Tensor& x, Mode mode, Rng*) {
  return softmax(dense_forward(x, state_, mode, false));
}

Tensor SoftmaxOutputLayer::backward(const Tensor& dlogits) { return dense_backward(dlogits, state_); }

void SoftmaxOutputLayer::initialize(Rng& rng) {
  const Shape shape = state_.params["W"].shape();
  state_.params["W"] = he_uniform(shape, shape[0], rng);
  state_.params["b"].fill(0.0);
}

}  // namespace cxr
