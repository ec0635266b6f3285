#include "cxrnet/tensor.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include "cxrnet/errors.hpp"

namespace cxr {

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

namespace {

void check_extents(const Shape& shape) {
  for (auto e : shape) {
    if (e == 0) throw DimensionError("tensor extents must be positive, got " + shape_str(shape));
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor, got " + shape_str(t.shape()));
  }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  check_extents(shape_);
  data_.assign(shape_numel(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  check_extents(shape_);
  if (shape_numel(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " needs " + std::to_string(shape_numel(shape_)) +
                         " elements, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t m = rows.size();
  const std::size_t n = m ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(m * n);
  for (const auto& row : rows) {
    if (row.size() != n) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({m, n}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.data_[i * n + i] = 1.0;
  return t;
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for " + shape_str(shape_));
  }
  return shape_[axis];
}

std::size_t Tensor::offset(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw DimensionError("index rank " + std::to_string(index.size()) + " does not match " + shape_str(shape_));
  }
  std::size_t off = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) {
      throw DimensionError("index " + std::to_string(index[i]) + " out of range on axis " + std::to_string(i) +
                           " of " + shape_str(shape_));
    }
    off = off * shape_[i] + index[i];
  }
  return off;
}

Tensor Tensor::reshape(Shape shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshape(std::move(shape));
}

Tensor Tensor::reshape(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), std::move(data_));
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b[i];
  return out;
}

Tensor operator*(const Tensor& a, double s) {
  Tensor out = a;
  for (auto& v : out.data()) v *= s;
  return out;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor out = a;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b[i];
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = x;
  for (auto& v : out.data()) v = v > 0.0 ? v : 0.0;
  return out;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

std::vector<std::size_t> strides_of(const Shape& shape) {
  std::vector<std::size_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) strides[i - 1] = strides[i] * shape[i];
  return strides;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul");
  require_rank2(b, "matmul");
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul: inner dimensions differ, " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor c({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = c.raw();
  // Row blocks let one pass over B serve several rows of A; the per-element
  // accumulation order over the inner index stays ascending.
  constexpr std::size_t kRowBlock = 8;
  for (std::size_t i0 = 0; i0 < m; i0 += kRowBlock) {
    const std::size_t i1 = std::min(m, i0 + kRowBlock);
    for (std::size_t p = 0; p < k; ++p) {
      const double* brow = pb + p * n;
      for (std::size_t i = i0; i < i1; ++i) {
        const double av = pa[i * k + p];
        if (av == 0.0) continue;
        double* crow = pc + i * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
  }
  return c;
}

void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out) {
  require_rank2(a, "matmul_tn");
  require_rank2(b, "matmul_tn");
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  if (b.dim(0) != k) {
    throw DimensionError("matmul_tn: leading dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  if (out.shape() != Shape{m, n}) out = Tensor({m, n});
  else out.fill(0.0);
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = out.raw();
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double av = pa[p * m + i];
      if (av == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  Tensor c;
  matmul_tn_into(a, b, c);
  return c;
}

Tensor transpose(const Tensor& a) {
  require_rank2(a, "transpose");
  const std::size_t m = a.dim(0), n = a.dim(1);
  Tensor t({n, m});
  constexpr std::size_t kTile = 32;
  for (std::size_t i0 = 0; i0 < m; i0 += kTile) {
    for (std::size_t j0 = 0; j0 < n; j0 += kTile) {
      const std::size_t i1 = std::min(m, i0 + kTile), j1 = std::min(n, j0 + kTile);
      for (std::size_t i = i0; i < i1; ++i) {
        for (std::size_t j = j0; j < j1; ++j) t[j * m + i] = a[i * n + j];
      }
    }
  }
  return t;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_rank2(a, "matmul_nt");
  require_rank2(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) {
    throw DimensionError("matmul_nt: trailing dimensions differ, " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n});
  const double* pa = a.raw();
  const double* pb = b.raw();
  double* pc = c.raw();
  // Rows of both operands are contiguous, so each output is a plain dot
  // product; four rows of B share each pass over a row of A.
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4) {
    const double* b0 = pb + j * k;
    const double* b1 = b0 + k;
    const double* b2 = b1 + k;
    const double* b3 = b2 + k;
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
      for (std::size_t p = 0; p < k; ++p) {
        const double av = arow[p];
        s0 += av * b0[p];
        s1 += av * b1[p];
        s2 += av * b2[p];
        s3 += av * b3[p];
      }
      double* crow = pc + i * n + j;
      crow[0] = s0;
      crow[1] = s1;
      crow[2] = s2;
      crow[3] = s3;
    }
  }
  for (; j < n; ++j) {
    const double* brow = pb + j * k;
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = pa + i * k;
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
      pc[i * n + j] = s;
    }
  }
  return c;
}

std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t pad, std::size_t stride) {
  if (kernel == 0 || stride == 0) throw DomainError("kernel and stride must be at least 1");
  if (in + 2 * pad < kernel) {
    throw DimensionError("kernel " + std::to_string(kernel) + " larger than padded extent " +
                         std::to_string(in + 2 * pad));
  }
  return (in + 2 * pad - kernel) / stride + 1;
}

Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t pad, std::size_t stride) {
  if (x.rank() != 3) throw DimensionError("im2col expects H x W x C, got " + shape_str(x.shape()));
  const std::size_t h = x.dim(0), w = x.dim(1), c = x.dim(2);
  const std::size_t ho = window_extent(h, kernel, pad, stride);
  const std::size_t wo = window_extent(w, kernel, pad, stride);
  const std::size_t row_len = kernel * kernel * c;
  Tensor cols({ho * wo, row_len});
  const double* px = x.raw();
  double* pc = cols.raw();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      double* row = pc + (oy * wo + ox) * row_len;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          double* dst = row + (ky * kernel + kx) * c;
          if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(h) || ix >= static_cast<std::ptrdiff_t>(w)) {
            continue;  // zero padding; cols is zero-initialized
          }
          std::memcpy(dst, px + (static_cast<std::size_t>(iy) * w + static_cast<std::size_t>(ix)) * c,
                      c * sizeof(double));
        }
      }
    }
  }
  return cols;
}

Tensor col2im(const Tensor& cols, std::size_t height, std::size_t width, std::size_t channels,
              std::size_t kernel, std::size_t pad, std::size_t stride) {
  const std::size_t ho = window_extent(height, kernel, pad, stride);
  const std::size_t wo = window_extent(width, kernel, pad, stride);
  const std::size_t row_len = kernel * kernel * channels;
  if (cols.rank() != 2 || cols.dim(0) != ho * wo || cols.dim(1) != row_len) {
    throw DimensionError("col2im: columns " + shape_str(cols.shape()) + " do not match image " +
                         shape_str({height, width, channels}));
  }
  Tensor x({height, width, channels});
  double* px = x.raw();
  const double* pc = cols.raw();
  for (std::size_t oy = 0; oy < ho; ++oy) {
    for (std::size_t ox = 0; ox < wo; ++ox) {
      const double* row = pc + (oy * wo + ox) * row_len;
      for (std::size_t ky = 0; ky < kernel; ++ky) {
        const auto iy = static_cast<std::ptrdiff_t>(oy * stride + ky) - static_cast<std::ptrdiff_t>(pad);
        if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
        for (std::size_t kx = 0; kx < kernel; ++kx) {
          const auto ix = static_cast<std::ptrdiff_t>(ox * stride + kx) - static_cast<std::ptrdiff_t>(pad);
          if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) continue;
          const double* src = row + (ky * kernel + kx) * channels;
          double* dst = px + (static_cast<std::size_t>(iy) * width + static_cast<std::size_t>(ix)) * channels;
          for (std::size_t ch = 0; ch < channels; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
  return x;
}

Tensor reduce(const Tensor& x, std::span<const std::size_t> axes, ReduceKind kind, bool keep_dims) {
  const std::size_t rank = x.rank();
  std::vector<bool> reduced(rank, axes.empty());
  for (auto a : axes) {
    if (a >= rank) throw DimensionError("reduce: axis " + std::to_string(a) + " out of range for " + shape_str(x.shape()));
    if (reduced[a]) throw DimensionError("reduce: axis " + std::to_string(a) + " listed twice");
    reduced[a] = true;
  }
  if (x.empty()) {
    if (kind == ReduceKind::Max) throw DomainError("reduce: max over an empty tensor");
    throw DimensionError("reduce: empty tensor");
  }

  Shape out_shape;
  for (std::size_t i = 0; i < rank; ++i) {
    if (!reduced[i]) out_shape.push_back(x.dim(i));
    else if (keep_dims) out_shape.push_back(1);
  }
  if (out_shape.empty()) out_shape.push_back(1);

  // Map each input element to its output slot via per-axis strides where
  // reduced axes contribute nothing.
  const auto in_strides = strides_of(x.shape());
  Shape kept_shape;
  for (std::size_t i = 0; i < rank; ++i) kept_shape.push_back(reduced[i] ? 1 : x.dim(i));
  const auto kept_strides = strides_of(kept_shape);

  const double init = kind == ReduceKind::Max ? -std::numeric_limits<double>::infinity() : 0.0;
  Tensor out(out_shape, init);
  std::size_t count = 1;
  for (std::size_t i = 0; i < rank; ++i) {
    if (reduced[i]) count *= x.dim(i);
  }

  for (std::size_t flat = 0; flat < x.size(); ++flat) {
    std::size_t rem = flat, dst = 0;
    for (std::size_t i = 0; i < rank; ++i) {
      const std::size_t idx = rem / in_strides[i];
      rem %= in_strides[i];
      if (!reduced[i]) dst += idx * kept_strides[i];
    }
    if (kind == ReduceKind::Max) out[dst] = std::max(out[dst], x[flat]);
    else out[dst] += x[flat];
  }
  if (kind == ReduceKind::Mean) {
    for (auto& v : out.data()) v /= static_cast<double>(count);
  }
  return out;
}

Tensor reduce(const Tensor& x, std::initializer_list<std::size_t> axes, ReduceKind kind, bool keep_dims) {
  return reduce(x, std::span<const std::size_t>(axes.begin(), axes.size()), kind, keep_dims);
}

namespace {

template <typename T>
void put_le(std::ostream& out, T value) {
  auto bits = std::bit_cast<std::array<unsigned char, sizeof(T)>>(value);
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  out.write(reinterpret_cast<const char*>(bits.data()), sizeof(T));
}

template <typename T>
T get_le(std::istream& in) {
  std::array<unsigned char, sizeof(T)> bits{};
  in.read(reinterpret_cast<char*>(bits.data()), sizeof(T));
  if (!in) throw InputError("truncated tensor stream");
  if constexpr (std::endian::native == std::endian::big) std::reverse(bits.begin(), bits.end());
  return std::bit_cast<T>(bits);
}

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  put_le<std::uint64_t>(out, t.rank());
  for (auto e : t.shape()) put_le<std::uint64_t>(out, e);
  if constexpr (std::endian::native == std::endian::little) {
    out.write(reinterpret_cast<const char*>(t.raw()), static_cast<std::streamsize>(t.size() * sizeof(double)));
  } else {
    for (double v : t.data()) put_le<double>(out, v);
  }
}

Tensor read_tensor(std::istream& in) {
  const auto rank = get_le<std::uint64_t>(in);
  if (rank > 16) throw InputError("implausible tensor rank " + std::to_string(rank));
  Shape shape(rank);
  for (auto& e : shape) e = get_le<std::uint64_t>(in);
  std::vector<double> data(shape_numel(shape));
  if constexpr (std::endian::native == std::endian::little) {
    in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw InputError("truncated tensor stream");
  } else {
    for (auto& v : data) v = get_le<double>(in);
  }
  return Tensor(std::move(shape), std::move(data));
}

void save_tensor(const std::string& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  write_tensor(out, t);
}

Tensor load_tensor(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  return read_tensor(in);
}

}  // namespace cxr
