#include <gtest/gtest.h>

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <sstream>

#include "cxrnet/errors.hpp"
#include "cxrnet/layers.hpp"
#include "cxrnet/metrics.hpp"
#include "oracles.hpp"

using namespace cxr;

namespace {

Tensor onehot_rows(const std::vector<int>& cls, std::size_t c = 3) {
  Tensor t({cls.size(), c});
  for (std::size_t i = 0; i < cls.size(); ++i) t.at(i, cls[i]) = 1.0;
  return t;
}

EvalResult fake_eval(double acc, double loss) {
  EvalResult r;
  r.accuracy = acc;
  r.loss = loss;
  r.flat_auc = acc;
  r.recall = {acc, acc, std::nullopt};
  r.n = 10;
  return r;
}

}  // namespace

TEST(Evaluate, PerfectPredictions) {
  const Tensor y = onehot_rows({0, 1, 2, 1});
  const EvalResult r = evaluate(y, y);
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.loss, 0.0);
  for (const auto& rec : r.recall) EXPECT_EQ(rec.value(), 1.0);
  EXPECT_EQ(r.flat_auc, 1.0);
}

TEST(Evaluate, AllPredictedCovidOnBalancedSet) {
  const Tensor y = onehot_rows({0, 1, 2, 0, 1, 2});
  Tensor p({6, 3});
  for (std::size_t i = 0; i < 6; ++i) p.at(i, 0) = 1.0;
  const EvalResult r = evaluate(p, y);
  EXPECT_NEAR(r.accuracy, 1.0 / 3.0, 1e-15);
  EXPECT_EQ(r.recall[0].value(), 1.0);
  EXPECT_EQ(r.recall[1].value(), 0.0);
  EXPECT_EQ(r.recall[2].value(), 0.0);
}

TEST(Evaluate, MatchesConfusionCounting) {
  Rng rng(1, "eval");
  const std::size_t n = 50;
  const Tensor p = softmax(rng.uniform_tensor({n, 3}, -2, 2));
  std::vector<int> cls;
  for (std::size_t i = 0; i < n; ++i) cls.push_back(static_cast<int>(rng.below(3)));
  const EvalResult r = evaluate(p, onehot_rows(cls));
  std::size_t conf[3][3] = {};
  for (std::size_t i = 0; i < n; ++i) {
    int best = 0;
    for (int j = 1; j < 3; ++j)
      if (p.at(i, j) > p.at(i, best)) best = j;
    ++conf[cls[i]][best];
  }
  std::size_t correct = 0;
  for (int t = 0; t < 3; ++t) {
    std::size_t row = 0;
    for (int q = 0; q < 3; ++q) {
      EXPECT_EQ(r.confusion[t][q], conf[t][q]);
      row += conf[t][q];
    }
    correct += conf[t][t];
    EXPECT_NEAR(r.recall[t].value(), static_cast<double>(conf[t][t]) / static_cast<double>(row), 1e-15);
  }
  EXPECT_NEAR(r.accuracy, static_cast<double>(correct) / n, 1e-15);
  double weighted = 0.0;
  for (int t = 0; t < 3; ++t) {
    const double prevalence = static_cast<double>(conf[t][0] + conf[t][1] + conf[t][2]) / n;
    weighted += prevalence * r.recall[t].value();
  }
  EXPECT_NEAR(r.accuracy, weighted, 1e-12);
}

TEST(Evaluate, AbsentClassHasNoRecallAndTiesGoLow) {
  const Tensor p = Tensor::matrix({{0.4, 0.4, 0.2}, {0.2, 0.4, 0.4}});
  const EvalResult r = evaluate(p, onehot_rows({0, 1}));
  EXPECT_EQ(r.confusion[0][0], 1u);
  EXPECT_EQ(r.confusion[1][1], 1u);
  EXPECT_FALSE(r.recall[2].has_value());
  EXPECT_THROW(evaluate(Tensor(), Tensor()), Error);
}

TEST(FlatAuc, PerfectSeparationAndAllTies) {
  const Tensor y = onehot_rows({0, 1, 2});
  EXPECT_EQ(flat_auc(y, y), 1.0);
  EXPECT_EQ(flat_auc(Tensor({3, 3}, 1.0 / 3.0), y), 0.5);
}

TEST(FlatAuc, MatchesPairwiseOracle) {
  Rng rng(2, "auc");
  const Tensor p = softmax(rng.uniform_tensor({20, 3}, -2, 2));
  std::vector<int> cls;
  for (int i = 0; i < 20; ++i) cls.push_back(static_cast<int>(rng.below(3)));
  const Tensor y = onehot_rows(cls);
  std::vector<double> s(p.data().begin(), p.data().end());
  std::vector<int> pos;
  for (double v : y.data()) pos.push_back(v == 1.0);
  EXPECT_NEAR(flat_auc(p, y), oracle::pairwise_auc(s, pos), 1e-9);
}

TEST(FlatAuc, InvariantUnderMonotoneTransform) {
  Rng rng(3, "auc");
  const Tensor p = softmax(rng.uniform_tensor({15, 3}, -2, 2));
  std::vector<int> cls;
  for (int i = 0; i < 15; ++i) cls.push_back(static_cast<int>(rng.below(3)));
  const Tensor y = onehot_rows(cls);
  std::vector<double> s(p.data().begin(), p.data().end()), t;
  std::vector<std::uint8_t> pos;
  for (double v : y.data()) pos.push_back(v == 1.0);
  for (double v : s) t.push_back(std::exp(5.0 * v) - 3.0);
  EXPECT_DOUBLE_EQ(binary_auc(s, pos), binary_auc(t, pos));
}

TEST(FlatAuc, SingleClassIsDomainError) {
  const std::vector<double> s = {0.1, 0.2};
  const std::vector<std::uint8_t> pos = {1, 1};
  EXPECT_THROW(binary_auc(s, pos), DomainError);
}

TEST(StudentT, QuantileMatchesReferenceLibrary) {
  for (double dof : {1.0, 2.0, 4.0, 9.0, 30.0}) {
    boost::math::students_t dist(dof);
    for (double p : {0.6, 0.9, 0.975, 0.995}) {
      EXPECT_NEAR(student_t_quantile(p, dof), boost::math::quantile(dist, p), 1e-9) << dof << " " << p;
      EXPECT_NEAR(student_t_cdf(boost::math::quantile(dist, p), dof), p, 1e-12);
    }
  }
  const double t4 = student_t_quantile(0.975, 4);
  EXPECT_GE(t4, 2.7759);
  EXPECT_LE(t4, 2.7771);
}

TEST(ConfidenceInterval, IdenticalValuesDegenerate) {
  const std::vector<double> v(5, 0.7);
  const auto ci = t_confidence_interval(v);
  EXPECT_EQ(ci.low, 0.7);
  EXPECT_EQ(ci.mean, 0.7);
  EXPECT_EQ(ci.high, 0.7);
}

TEST(ConfidenceInterval, HandArithmetic) {
  const std::vector<double> v = {0, 0, 0, 0, 1};
  const auto ci = t_confidence_interval(v);
  EXPECT_NEAR(ci.mean, 0.2, 1e-15);
  EXPECT_NEAR(ci.std, 0.4472, 1e-4);
  EXPECT_NEAR(ci.half_width, 0.5552, 1e-3);
  EXPECT_NEAR(ci.low, -0.3552, 1e-3);
  EXPECT_NEAR(ci.high, 0.7552, 1e-3);
  EXPECT_NEAR(ci.high - ci.mean, ci.mean - ci.low, 1e-15);
  EXPECT_THROW(t_confidence_interval(std::vector<double>{1.0}), DomainError);
}

TEST(ConfidenceInterval, HalfWidthScalesWithSpread) {
  const std::vector<double> v = {0.1, 0.5, 0.3, 0.9, 0.2};
  std::vector<double> w;
  for (double x : v) w.push_back(3.0 * x);
  EXPECT_NEAR(t_confidence_interval(w).half_width, 3.0 * t_confidence_interval(v).half_width, 1e-12);
}

TEST(Summarize, MeansAndFoldCount) {
  std::vector<FoldEval> folds;
  const double accs[] = {0.8, 0.9, 0.85, 0.95, 0.7};
  for (double a : accs) folds.push_back({fake_eval(a, 1 - a), fake_eval(a - 0.1, 1.1 - a)});
  const CVSummary s = summarize(folds, 5);
  EXPECT_NEAR(s.at(Split::Internal, Metric::Accuracy).mean, (0.8 + 0.9 + 0.85 + 0.95 + 0.7) / 5, 1e-12);
  EXPECT_NEAR(s.at(Split::External, Metric::Accuracy).mean, (0.8 + 0.9 + 0.85 + 0.95 + 0.7) / 5 - 0.1, 1e-12);
  EXPECT_TRUE(std::isnan(s.at(Split::Internal, Metric::OtherPneumoniaRecall).mean));
  EXPECT_THROW(summarize(folds, 4), DomainError);
}

TEST(Formatting, RoundHalfEvenToThousandth) {
  EXPECT_EQ(format_fixed(0.93949, 3), "0.939");
  EXPECT_EQ(format_fixed(0.9385, 3), "0.938");
  EXPECT_EQ(format_fixed(0.0625, 3), "0.062");
  EXPECT_EQ(format_fixed(-0.0001, 3), "0.000");
  EXPECT_EQ(format_fixed(-0.135, 3), "-0.135");
}

TEST(Formatting, PercentCells) {
  EXPECT_EQ(format_percent_ci(0.939, 0.034), "93.9(±3.4)%");
  EXPECT_EQ(format_percent_bounds(0.939, 0.905, 0.973), "93.9_{-3.4}^{+3.4}%");
  EXPECT_EQ(format_percent_ci(0.5, 0.0), "50.0(±0.0)%");
}

TEST(SummaryCsv, TableShape) {
  std::vector<FoldEval> folds;
  for (double a : {0.8, 0.9, 0.85, 0.95, 0.7}) folds.push_back({fake_eval(a, 1 - a), fake_eval(a, 1 - a)});
  const std::string csv = summary_csv(summarize(folds, 5));
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "metric,lhs95,value,rhs95,split");
  std::vector<std::string> rows;
  while (std::getline(in, line)) rows.push_back(line);
  ASSERT_EQ(rows.size(), 12u);
  EXPECT_EQ(rows[0].substr(0, 5), "Loss,");
  EXPECT_NE(rows[0].find(",internal"), std::string::npos);
  EXPECT_EQ(rows[6].substr(0, 5), "Loss,");
  EXPECT_NE(rows[6].find(",external"), std::string::npos);
  EXPECT_EQ(rows[1].substr(0, 8), "Accuracy");
  EXPECT_EQ(rows[2].substr(0, 8), "Flat AUC");
}

TEST(SummaryJson, RoundTrip) {
  std::vector<FoldEval> folds;
  for (double a : {0.8, 0.9, 0.85}) folds.push_back({fake_eval(a, 1 - a), fake_eval(a - 0.05, 1 - a)});
  const CVSummary s = summarize(folds, 3);
  const CVSummary back = summary_from_json(summary_json(s));
  ASSERT_EQ(back.folds.size(), 3u);
  for (auto split : {Split::Internal, Split::External})
    for (auto m : kAllMetrics) {
      const double a = s.at(split, m).mean, b = back.at(split, m).mean;
      if (std::isnan(a)) EXPECT_TRUE(std::isnan(b));
      else EXPECT_EQ(a, b);
    }
}
