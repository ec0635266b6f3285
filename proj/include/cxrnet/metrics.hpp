#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cxrnet/data.hpp"
#include "cxrnet/tensor.hpp"

namespace cxr {

struct EvalResult {
  double loss = 0.0;
  double accuracy = 0.0;
  double flat_auc = 0.0;
  /// Recall per class; empty for classes absent from the evaluated split.
  std::array<std::optional<double>, kNumClasses> recall{};
  std::size_t n = 0;
  /// confusion[true][predicted]
  std::array<std::array<std::size_t, kNumClasses>, kNumClasses> confusion{};
};

/// Arg-max predictions (ties to the lowest class index), accuracy, per-class
/// recall, flat AUC and cross-entropy loss. Throws DomainError for N = 0.
EvalResult evaluate(const Tensor& probs, const Tensor& labels);

std::size_t argmax_row(const Tensor& probs, std::size_t row);

/// Binary AUC as the tie-aware Mann–Whitney statistic (average ranks).
/// Throws DomainError when all labels are equal.
double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

/// Multi-class AUC over the flattened (label bit, probability) pairs of an
/// N×c prediction matrix.
double flat_auc(const Tensor& probs, const Tensor& labels);

/// Student-t cumulative distribution function.
double student_t_cdf(double t, double dof);
/// Inverse of student_t_cdf for p in (0, 1).
double student_t_quantile(double p, double dof);

struct ConfidenceInterval {
  double low = 0.0;
  double mean = 0.0;
  double high = 0.0;
  double std = 0.0;  // sample standard deviation (n − 1)
  double half_width = 0.0;
};

/// mean ± t_{(1+level)/2, n−1} · s / √n. Throws DomainError for n < 2.
ConfidenceInterval t_confidence_interval(std::span<const double> values, double level = 0.95);

enum class Metric { Loss, Accuracy, FlatAuc, Covid19Recall, NoFindingRecall, OtherPneumoniaRecall };
inline constexpr std::array<Metric, 6> kAllMetrics = {Metric::Loss,          Metric::Accuracy,
                                                      Metric::FlatAuc,       Metric::Covid19Recall,
                                                      Metric::NoFindingRecall, Metric::OtherPneumoniaRecall};
std::string_view metric_name(Metric m);
/// NaN when the metric is undefined for the result (absent class).
double metric_value(const EvalResult& r, Metric m);

enum class Split { Internal, External };
std::string_view split_name(Split s);

struct FoldEval {
  EvalResult train;
  EvalResult test;
};

struct CVSummary {
  std::vector<FoldEval> folds;
  /// [split][metric]
  std::array<std::array<ConfidenceInterval, kAllMetrics.size()>, 2> stats{};

  const ConfidenceInterval& at(Split s, Metric m) const {
    return stats[static_cast<std::size_t>(s)][static_cast<std::size_t>(m)];
  }
};

/// Aggregates fold results. Throws DomainError when the fold count differs
/// from `expected_folds` or is below 2.
CVSummary summarize(std::vector<FoldEval> folds, std::size_t expected_folds);

/// Round-half-even to `decimals` places, rendered without exponent.
std::string format_fixed(double value, int decimals);
/// "93.9(±3.4)%" from mean 0.939 and half-width 0.034.
std::string format_percent_ci(double mean, double half_width);
/// "93.9_{-3.4}^{+3.4}%", the comparison-table cell format.
std::string format_percent_bounds(double mean, double low, double high);

/// `metric,lhs95,value,rhs95,split` rows, internal block first, values
/// rounded to the thousandth.
std::string summary_csv(const CVSummary& summary);
std::string eval_json(const EvalResult& r);
std::string summary_json(const CVSummary& summary);
CVSummary summary_from_json(const std::string& text);

}  // namespace cxr
