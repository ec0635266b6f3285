#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <string_view>

#include "cxrnet/tensor.hpp"

namespace cxr {

/// Seeded random stream identified by (seed, label).
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard. Its seed is splitmix64(seed ^ fnv1a64(label)). Real and
/// integer draws are mapped by hand (not via <random> distributions,
/// which are implementation-defined), so equal (seed, label) pairs give
/// bitwise-equal draws on every conforming platform.
class Rng {
 public:
  Rng(std::uint64_t seed, std::string_view label);

  /// Child stream whose label is "<parent label>/<suffix>".
  Rng derive(std::string_view suffix) const;

  std::uint64_t seed() const noexcept { return seed_; }
  const std::string& label() const noexcept { return label_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1) with 53 random bits.
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi);
  /// Uniform integer in [0, n), unbiased via rejection.
  std::uint64_t below(std::uint64_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Tensor of uniform draws in [lo, hi).
  Tensor uniform_tensor(Shape shape, double lo, double hi);

  /// Fisher–Yates shuffle with this stream.
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const auto j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::string label_;
  std::mt19937_64 engine_;
};

std::uint64_t fnv1a64(std::string_view text) noexcept;
std::uint64_t splitmix64(std::uint64_t x) noexcept;

}  // namespace cxr
