#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cxrnet/data.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/metrics.hpp"
#include "cxrnet/optim.hpp"
#include "oracles.hpp"

using namespace cxr;

TEST(Property, StratifiedFoldsOverRandomDatasets) {
  Rng rng(2024, "prop/kfold");
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t k = 2 + rng.below(9);
    std::vector<ClassLabel> labels;
    for (auto c : kAllClasses) labels.insert(labels.end(), k + rng.below(60), c);
    rng.shuffle(std::span<ClassLabel>(labels));
    const std::uint64_t seed = rng.next_u64();
    const FoldPlan plan = stratified_kfold(labels, k, seed);
    ASSERT_EQ(plan.assignments.size(), labels.size());
    std::vector<std::array<std::size_t, 3>> per(k);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      ASSERT_LT(plan.assignments[i], k);
      ++per[plan.assignments[i]][class_index(labels[i])];
    }
    for (std::size_t c = 0; c < 3; ++c) {
      std::size_t lo = SIZE_MAX, hi = 0;
      for (const auto& f : per) {
        lo = std::min(lo, f[c]);
        hi = std::max(hi, f[c]);
      }
      ASSERT_LE(hi - lo, 1u) << "trial " << trial;
    }
    std::size_t lo = SIZE_MAX, hi = 0;
    for (std::size_t f = 0; f < k; ++f) {
      lo = std::min(lo, plan.count(f));
      hi = std::max(hi, plan.count(f));
    }
    ASSERT_LE(hi - lo, 1u) << "trial " << trial;
    ASSERT_EQ(stratified_kfold(labels, k, seed).assignments, plan.assignments);
  }
}

TEST(Property, ConvMatchesDirectOracle) {
  Rng rng(7, "prop/conv");
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng.below(8), w = 1 + rng.below(8), cin = 1 + rng.below(3);
    const std::size_t cout = 1 + rng.below(4), n = 1 + rng.below(2);
    const std::size_t k = rng.bernoulli(0.5) ? 3 : 1;
    const Tensor x = rng.uniform_tensor({n, h, w, cin}, -1, 1);
    LayerState s;
    s.params["W"] = rng.uniform_tensor({k, k, cin, cout}, -1, 1);
    s.params["b"] = rng.uniform_tensor({cout}, -1, 1);
    const Tensor ref = oracle::conv_same(x, s.params["W"], s.params["b"], true);
    ASSERT_LE(max_abs_diff(conv2d_forward(x, s, Mode::Infer), ref), 1e-10) << "trial " << trial;
  }
}

TEST(Property, FlatAucMatchesPairsWithTies) {
  Rng rng(8, "prop/auc");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(30);
    Tensor p({n, 3}), y({n, 3});
    // Coarse levels force many ties.
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = static_cast<double>(rng.below(6)) / 5.0;
    for (std::size_t i = 0; i < n; ++i) y.at(i, rng.below(3)) = 1.0;
    std::vector<double> s(p.data().begin(), p.data().end());
    std::vector<int> pos;
    for (double v : y.data()) pos.push_back(v == 1.0);
    ASSERT_NEAR(flat_auc(p, y), oracle::pairwise_auc(s, pos), 1e-9) << "trial " << trial;
  }
}

TEST(Property, MaxPoolBackwardConservesGradientOnDisjointWindows) {
  Rng rng(9, "prop/pool");
  for (int trial = 0; trial < 50; ++trial) {
    const Tensor x = rng.uniform_tensor({1 + rng.below(2), 2 + rng.below(7), 2 + rng.below(7), 1 + rng.below(3)},
                                        -1, 1);
    LayerState s;
    const Tensor y = maxpool_forward(x, s, 2, 2, Mode::Train);
    const Tensor dy = rng.uniform_tensor(y.shape(), -1, 1);
    const Tensor dx = maxpool_backward(dy, s);
    double sx = 0.0, sy = 0.0;
    std::size_t nonzero = 0;
    for (double v : dx.data()) {
      sx += v;
      nonzero += v != 0.0;
    }
    for (double v : dy.data()) sy += v;
    EXPECT_NEAR(sx, sy, 1e-12);
    EXPECT_EQ(nonzero, y.size());
  }
}

TEST(Property, CrossEntropyNonNegativeAndZeroOnlyWhenExact) {
  Rng rng(10, "prop/ce");
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.below(6);
    const Tensor p = softmax(rng.uniform_tensor({n, 3}, -4, 4));
    Tensor y({n, 3});
    for (std::size_t i = 0; i < n; ++i) y.at(i, rng.below(3)) = 1.0;
    const LossResult r = cross_entropy(p, y);
    EXPECT_GT(r.loss, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 3; ++j) row += r.dlogits.at(i, j);
      EXPECT_LE(std::abs(row), 1e-12);
    }
  }
}

TEST(Property, SoftmaxRowsArePositiveAndNormalized) {
  Rng rng(11, "prop/softmax");
  for (int trial = 0; trial < 100; ++trial) {
    const Tensor p = softmax(rng.uniform_tensor({3, 2 + rng.below(5)}, -50, 50));
    for (std::size_t i = 0; i < p.dim(0); ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < p.dim(1); ++j) {
        EXPECT_GE(p.at(i, j), 0.0);
        row += p.at(i, j);
      }
      EXPECT_NEAR(row, 1.0, 1e-6);
    }
  }
}

TEST(Property, BatchNormTrainOutputsStandardized) {
  Rng rng(12, "prop/bn");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 8 + rng.below(24), f = 1 + rng.below(6);
    LayerState s;
    s.params["gamma"] = Tensor({f}, 1.0);
    s.params["beta"] = Tensor({f});
    s.buffers["running_mean"] = Tensor({f});
    s.buffers["running_var"] = Tensor({f}, 1.0);
    const double scale = 10.0 + 10.0 * rng.uniform();
    const Tensor x = rng.uniform_tensor({n, f}, -scale, 3 * scale);
    const Tensor y = batchnorm_forward(x, s, Mode::Train);
    for (std::size_t j = 0; j < f; ++j) {
      double m = 0.0, v = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += y.at(i, j);
      m /= static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) v += (y.at(i, j) - m) * (y.at(i, j) - m);
      v /= static_cast<double>(n);
      EXPECT_LE(std::abs(m), 1e-6);
      EXPECT_LE(std::abs(v - 1.0), 1e-3);
    }
  }
}

TEST(Property, ReshapePreservesRowMajorOrder) {
  Rng rng(13, "prop/reshape");
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t a = 1 + rng.below(5), b = 1 + rng.below(5), c = 1 + rng.below(5);
    const Tensor t = rng.uniform_tensor({a, b, c}, -1, 1);
    const Tensor r = t.reshape({a * b, c});
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k) ASSERT_EQ(t.at(i, j, k), r.at(i * b + j, k));
  }
}
