#include <gtest/gtest.h>

#include <cmath>

#include "cxrnet/errors.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/optim.hpp"
#include "cxrnet/rng.hpp"

using namespace cxr;

TEST(CrossEntropy, PerfectPredictionHasZeroLoss) {
  const Tensor p = Tensor::matrix({{1, 0, 0}, {0, 0, 1}});
  EXPECT_EQ(cross_entropy(p, p).loss, 0.0);
}

TEST(CrossEntropy, UniformIsLogThree) {
  const Tensor p({2, 3}, 1.0 / 3.0);
  const Tensor y = Tensor::matrix({{0, 1, 0}, {1, 0, 0}});
  EXPECT_NEAR(cross_entropy(p, y).loss, std::log(3.0), 1e-12);
}

TEST(CrossEntropy, MatchesDirectFormula) {
  Rng rng(1, "ce");
  const Tensor p = softmax(rng.uniform_tensor({5, 3}, -2, 2));
  Tensor y({5, 3});
  for (std::size_t i = 0; i < 5; ++i) y.at(i, rng.below(3)) = 1.0;
  double ref = 0.0;
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t j = 0; j < 3; ++j) ref -= y.at(i, j) * std::log(p.at(i, j));
  ref /= 5.0;
  const LossResult r = cross_entropy(p, y);
  EXPECT_NEAR(r.loss, ref, 1e-12);
  for (std::size_t i = 0; i < 5; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(r.dlogits.at(i, j), (p.at(i, j) - y.at(i, j)) / 5.0, 1e-15);
      row += r.dlogits.at(i, j);
    }
    EXPECT_LE(std::abs(row), 1e-12);
  }
}

TEST(CrossEntropy, ClampsZeroProbability) {
  const Tensor p = Tensor::matrix({{0, 1}});
  const Tensor y = Tensor::matrix({{1, 0}});
  EXPECT_NEAR(cross_entropy(p, y).loss, -std::log(1e-12), 1e-9);
}

TEST(CrossEntropy, RejectsInvalidRows) {
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0.5, 0.6}}), Tensor::matrix({{1, 0}})), DomainError);
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{1, 1}})), DomainError);
  EXPECT_THROW(cross_entropy(Tensor::matrix({{0.5, 0.5}}), Tensor::matrix({{1, 0, 0}})), DimensionError);
}

TEST(Adam, ZeroGradientLeavesParametersUnchanged) {
  Tensor theta = Tensor::vector({1.0, -2.0, 3.0});
  const Tensor g({3});
  AdamState st;
  adam_step(st, {{&theta, &g}});
  EXPECT_EQ(theta, Tensor::vector({1.0, -2.0, 3.0}));
  EXPECT_EQ(st.t, 1u);
}

TEST(Adam, FirstStepMatchesHandExpansion) {
  Tensor theta = Tensor::vector({1.0});
  const Tensor g = Tensor::vector({2.0});
  AdamState st;
  adam_step(st, {{&theta, &g}});
  const double lr = 1e-4, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  const double m = (1 - b1) * 2.0, v = (1 - b2) * 4.0;
  const double m_hat = m / (1 - b1), v_hat = v / (1 - b2);
  const double expected = 1.0 - lr * m_hat / (std::sqrt(v_hat) + eps);
  EXPECT_NEAR(theta[0], expected, 1e-12);
  EXPECT_NEAR(theta[0], 1.0 - lr, 1e-11);
  EXPECT_NEAR(st.m[0][0], m, 1e-15);
  EXPECT_NEAR(st.v[0][0], v, 1e-15);
}

TEST(Adam, QuadraticConvergesWithLargeRate) {
  Tensor theta = Tensor::vector({1.0});
  AdamState st;
  st.config.lr = 0.1;
  std::vector<double> trace;
  for (int step = 0; step < 100; ++step) {
    const Tensor g = Tensor::vector({2.0 * theta[0]});
    adam_step(st, {{&theta, &g}});
    trace.push_back(std::abs(theta[0]));
  }
  EXPECT_LT(trace.back(), 0.5);
  for (std::size_t i = 1; i < 10; ++i) EXPECT_LT(trace[i], trace[i - 1]);
}

TEST(Adam, DeltaIsLinearInLearningRate) {
  Rng rng(2, "adam");
  const Tensor start = rng.uniform_tensor({10}, -1, 1);
  const Tensor g = rng.uniform_tensor({10}, -1, 1);
  Tensor a = start, b = start;
  AdamState sa, sb;
  sb.config.lr = 2.0 * sa.config.lr;
  adam_step(sa, {{&a, &g}});
  adam_step(sb, {{&b, &g}});
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(b[i] - start[i], 2.0 * (a[i] - start[i]), 1e-15);
}

TEST(Adam, MomentsMirrorShapesAndStepCountIncrements) {
  Tensor w({2, 3}), b({3});
  const Tensor gw({2, 3}, 0.1), gb({3}, 0.2);
  AdamState st;
  adam_step(st, {{&w, &gw}, {&b, &gb}});
  adam_step(st, {{&w, &gw}, {&b, &gb}});
  EXPECT_EQ(st.t, 2u);
  EXPECT_EQ(st.m[0].shape(), w.shape());
  EXPECT_EQ(st.v[1].shape(), b.shape());
}

TEST(Adam, ShapeMismatchIsDimensionError) {
  Tensor w({2, 3});
  const Tensor g({3, 2});
  AdamState st;
  EXPECT_THROW(adam_step(st, {{&w, &g}}), DimensionError);
}
