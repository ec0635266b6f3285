#pragma once

#include <cstddef>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cxr {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Dense row-major array of doubles.
///
/// The shape is fixed at construction; element values are mutable so that
/// parameters can be updated in place by the optimizer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0); }
  static Tensor ones(Shape shape) { return Tensor(std::move(shape), 1.0); }
  /// Rank-2 tensor from nested rows; all rows must have equal length.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double* raw() noexcept { return data_.data(); }
  const double* raw() const noexcept { return data_.data(); }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Flat offset of a multi-index (bounds-checked).
  std::size_t offset(std::span<const std::size_t> index) const;

  template <typename... I>
  double& at(I... idx) {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }
  template <typename... I>
  double at(I... idx) const {
    const std::size_t index[] = {static_cast<std::size_t>(idx)...};
    return data_[offset(index)];
  }

  /// Same data under a new shape with equal element count.
  Tensor reshape(Shape shape) const&;
  Tensor reshape(Shape shape) &&;

  void fill(double value);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Elementwise helpers. Binary ops require identical shapes.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(const Tensor& a, double s);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor relu(const Tensor& x);
double max_abs_diff(const Tensor& a, const Tensor& b);

/// Row-major strides for a shape.
std::vector<std::size_t> strides_of(const Shape& shape);

/// C = A·B. Every output element is accumulated over the inner index in
/// ascending order, independent of blocking.
Tensor matmul(const Tensor& a, const Tensor& b);
/// C = Aᵀ·B without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// Same as matmul_tn, writing into `out` and reusing its storage when the
/// shape already matches.
void matmul_tn_into(const Tensor& a, const Tensor& b, Tensor& out);
/// C = A·Bᵀ.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Output extent of a sliding window along one axis.
std::size_t window_extent(std::size_t in, std::size_t kernel, std::size_t pad, std::size_t stride);

/// Unfolds an H×W×C image into one row per receptive field. Row layout is
/// (ky, kx, c) so that a k×k×C×M weight tensor reshaped to (k·k·C)×M
/// multiplies it directly. Padding contributes zeros.
Tensor im2col(const Tensor& x, std::size_t kernel, std::size_t pad, std::size_t stride);
/// Adjoint of im2col: scatters-and-adds rows back into an H×W×C image.
Tensor col2im(const Tensor& cols, std::size_t height, std::size_t width, std::size_t channels,
              std::size_t kernel, std::size_t pad, std::size_t stride);

enum class ReduceKind { Sum, Mean, Max };

/// Reduces over the listed axes. An empty axis list reduces over all axes.
/// With keep_dims, reduced axes remain with extent 1; otherwise they are
/// removed (a full reduction yields shape {1}).
Tensor reduce(const Tensor& x, std::span<const std::size_t> axes, ReduceKind kind,
              bool keep_dims = false);
Tensor reduce(const Tensor& x, std::initializer_list<std::size_t> axes, ReduceKind kind,
              bool keep_dims = false);

// Binary dump: u64 rank, u64 extents[rank], f64 data[numel]; all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::string& path, const Tensor& t);
Tensor load_tensor(const std::string& path);

}  // namespace cxr
