#include "cxrnet/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>

#include "json.hpp"

#include "cxrnet/errors.hpp"
#include "cxrnet/optim.hpp"

namespace cxr {

using nlohmann::json;

std::size_t argmax_row(const Tensor& probs, std::size_t row) {
  const std::size_t c = probs.dim(1);
  std::size_t best = 0;
  for (std::size_t j = 1; j < c; ++j) {
    if (probs[row * c + j] > probs[row * c + best]) best = j;
  }
  return best;
}

EvalResult evaluate(const Tensor& probs, const Tensor& labels) {
  if (probs.empty()) throw DomainError("evaluate: no samples");
  if (probs.rank() != 2 || probs.dim(1) != kNumClasses || probs.shape() != labels.shape()) {
    throw DimensionError("evaluate: expected N x 3 probabilities and labels, got " + shape_str(probs.shape()) +
                         " and " + shape_str(labels.shape()));
  }
  EvalResult r;
  r.n = probs.dim(0);
  r.loss = cross_entropy(probs, labels).loss;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < r.n; ++i) {
    const std::size_t truth = argmax_row(labels, i);
    const std::size_t pred = argmax_row(probs, i);
    r.confusion[truth][pred] += 1;
    if (truth == pred) ++correct;
  }
  r.accuracy = static_cast<double>(correct) / static_cast<double>(r.n);
  for (std::size_t c = 0; c < kNumClasses; ++c) {
    const std::size_t support = std::accumulate(r.confusion[c].begin(), r.confusion[c].end(), std::size_t{0});
    if (support > 0) r.recall[c] = static_cast<double>(r.confusion[c][c]) / static_cast<double>(support);
  }
  r.flat_auc = flat_auc(probs, labels);
  return r;
}

double binary_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw DimensionError("binary_auc: score/label length mismatch");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Sum of 1-based average ranks over positives.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i + 1;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (positive[order[t]]) {
        rank_sum += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) throw DomainError("AUC undefined: labels contain a single class");
  const double np = static_cast<double>(n_pos);
  const double u = rank_sum - np * (np + 1.0) / 2.0;
  return u / (np * static_cast<double>(n_neg));
}

double flat_auc(const Tensor& probs, const Tensor& labels) {
  if (probs.shape() != labels.shape()) {
    throw DimensionError("flat_auc: shapes differ, " + shape_str(probs.shape()) + " vs " + shape_str(labels.shape()));
  }
  std::vector<std::uint8_t> bits(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) bits[i] = labels[i] > 0.5 ? 1 : 0;
  return binary_auc(probs.data(), bits);
}

namespace {

double beta_continued_fraction(double a, double b, double x) {
  constexpr int kMaxIter = 500;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) break;
  }
  return h;
}

// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * beta_continued_fraction(a, b, x) / a;
  return 1.0 - front * beta_continued_fraction(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_cdf(double t, double dof) {
  if (!(dof > 0.0)) throw DomainError("student_t_cdf: degrees of freedom must be positive");
  if (std::isinf(t)) return t > 0 ? 1.0 : 0.0;
  const double tail = 0.5 * incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
  return t > 0.0 ? 1.0 - tail : tail;
}

double student_t_quantile(double p, double dof) {
  if (!(p > 0.0 && p < 1.0)) throw DomainError("student_t_quantile: p must lie in (0, 1)");
  if (p == 0.5) return 0.0;
  if (p < 0.5) return -student_t_quantile(1.0 - p, dof);
  double lo = 0.0, hi = 1.0;
  while (student_t_cdf(hi, dof) < p) {
    lo = hi;
    hi *= 2.0;
    if (hi > 1e300) throw DomainError("student_t_quantile: failed to bracket");
  }
  for (int i = 0; i < 200 && hi - lo > 1e-15 * hi; ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

ConfidenceInterval t_confidence_interval(std::span<const double> values, double level) {
  if (values.size() < 2) throw DomainError("t_confidence_interval: need at least 2 values");
  if (!(level > 0.0 && level < 1.0)) throw DomainError("t_confidence_interval: level must lie in (0, 1)");
  const double n = static_cast<double>(values.size());
  ConfidenceInterval ci;
  ci.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - ci.mean) * (v - ci.mean);
  ci.std = std::sqrt(ss / (n - 1.0));
  const double t = student_t_quantile(0.5 + level / 2.0, n - 1.0);
  ci.half_width = t * ci.std / std::sqrt(n);
  ci.low = ci.mean - ci.half_width;
  ci.high = ci.mean + ci.half_width;
  return ci;
}

std::string_view metric_name(Metric m) {
  switch (m) {
    case Metric::Loss: return "Loss";
    case Metric::Accuracy: return "Accuracy";
    case Metric::FlatAuc: return "Flat AUC";
    case Metric::Covid19Recall: return "COVID-19 Recall";
    case Metric::NoFindingRecall: return "No Finding Recall";
    case Metric::OtherPneumoniaRecall: return "Other Pneumonia Recall";
  }
  return "?";
}

double metric_value(const EvalResult& r, Metric m) {
  const auto recall = [&](ClassLabel c) {
    const auto& v = r.recall[class_index(c)];
    return v ? *v : std::numeric_limits<double>::quiet_NaN();
  };
  switch (m) {
    case Metric::Loss: return r.loss;
    case Metric::Accuracy: return r.accuracy;
    case Metric::FlatAuc: return r.flat_auc;
    case Metric::Covid19Recall: return recall(ClassLabel::Covid19);
    case Metric::NoFindingRecall: return recall(ClassLabel::NoFinding);
    case Metric::OtherPneumoniaRecall: return recall(ClassLabel::OtherPneumonia);
  }
  return std::numeric_limits<double>::quiet_NaN();
}

std::string_view split_name(Split s) { return s == Split::Internal ? "internal" : "external"; }

CVSummary summarize(std::vector<FoldEval> folds, std::size_t expected_folds) {
  if (folds.size() != expected_folds) {
    throw DomainError("summarize: expected " + std::to_string(expected_folds) + " folds, got " +
                      std::to_string(folds.size()));
  }
  CVSummary s;
  s.folds = std::move(folds);
  for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
    std::vector<double> train, test;
    for (const auto& f : s.folds) {
      train.push_back(metric_value(f.train, kAllMetrics[m]));
      test.push_back(metric_value(f.test, kAllMetrics[m]));
    }
    s.stats[0][m] = t_confidence_interval(train);
    s.stats[1][m] = t_confidence_interval(test);
  }
  return s;
}

std::string format_fixed(double value, int decimals) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  const int saved = std::fegetround();
  std::fesetround(FE_TONEAREST);
  const double scaled = std::nearbyint(value * std::pow(10.0, decimals));
  std::fesetround(saved);
  const bool negative = scaled < 0.0;
  std::string digits = std::to_string(static_cast<long long>(std::abs(scaled)));
  if (decimals > 0) {
    if (digits.size() <= static_cast<std::size_t>(decimals)) {
      digits.insert(0, static_cast<std::size_t>(decimals) + 1 - digits.size(), '0');
    }
    digits.insert(digits.size() - static_cast<std::size_t>(decimals), ".");
  }
  return (negative ? "-" : "") + digits;
}

std::string format_percent_ci(double mean, double half_width) {
  return format_fixed(mean * 100.0, 1) + "(±" + format_fixed(half_width * 100.0, 1) + ")%";
}

std::string format_percent_bounds(double mean, double low, double high) {
  return format_fixed(mean * 100.0, 1) + "_{-" + format_fixed((mean - low) * 100.0, 1) + "}^{+" +
         format_fixed((high - mean) * 100.0, 1) + "}%";
}

std::string summary_csv(const CVSummary& summary) {
  std::ostringstream os;
  os << "metric,lhs95,value,rhs95,split\n";
  for (auto split : {Split::Internal, Split::External}) {
    for (auto m : kAllMetrics) {
      const auto& ci = summary.at(split, m);
      os << metric_name(m) << ',' << format_fixed(ci.low, 3) << ',' << format_fixed(ci.mean, 3) << ','
         << format_fixed(ci.high, 3) << ',' << split_name(split) << '\n';
    }
  }
  return os.str();
}

namespace {

json nullable(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

double as_double(const json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

json eval_to_json(const EvalResult& r) {
  json recall = json::object();
  for (auto c : kAllClasses) {
    const auto& v = r.recall[class_index(c)];
    recall[std::string(class_display_name(c))] = v ? json(*v) : json(nullptr);
  }
  json confusion = json::array();
  for (const auto& row : r.confusion) confusion.push_back(row);
  return {{"n", r.n},
          {"loss", nullable(r.loss)},
          {"accuracy", r.accuracy},
          {"flat_auc", r.flat_auc},
          {"recall", recall},
          {"confusion", confusion}};
}

EvalResult eval_from_json(const json& j) {
  EvalResult r;
  r.n = j.at("n").get<std::size_t>();
  r.loss = as_double(j.at("loss"));
  r.accuracy = j.at("accuracy").get<double>();
  r.flat_auc = j.at("flat_auc").get<double>();
  for (auto c : kAllClasses) {
    const auto& v = j.at("recall").at(std::string(class_display_name(c)));
    if (!v.is_null()) r.recall[class_index(c)] = v.get<double>();
  }
  const auto& conf = j.at("confusion");
  for (std::size_t a = 0; a < kNumClasses; ++a) {
    for (std::size_t b = 0; b < kNumClasses; ++b) r.confusion[a][b] = conf.at(a).at(b).get<std::size_t>();
  }
  return r;
}

}  // namespace

std::string eval_json(const EvalResult& r) { return eval_to_json(r).dump(2); }

std::string summary_json(const CVSummary& summary) {
  json folds = json::array();
  for (const auto& f : summary.folds) folds.push_back({{"train", eval_to_json(f.train)}, {"test", eval_to_json(f.test)}});
  json stats = json::object();
  for (auto split : {Split::Internal, Split::External}) {
    json block = json::object();
    for (auto m : kAllMetrics) {
      const auto& ci = summary.at(split, m);
      block[std::string(metric_name(m))] = {{"mean", nullable(ci.mean)},
                                            {"std", nullable(ci.std)},
                                            {"low", nullable(ci.low)},
                                            {"high", nullable(ci.high)},
                                            {"half_width", nullable(ci.half_width)}};
    }
    stats[std::string(split_name(split))] = block;
  }
  json root = {{"k", summary.folds.size()}, {"folds", folds}, {"summary", stats}};
  return root.dump(2) + "\n";
}

CVSummary summary_from_json(const std::string& text) {
  CVSummary s;
  try {
    const json root = json::parse(text);
    for (const auto& f : root.at("folds")) s.folds.push_back({eval_from_json(f.at("train")), eval_from_json(f.at("test"))});
    for (auto split : {Split::Internal, Split::External}) {
      const auto& block = root.at("summary").at(std::string(split_name(split)));
      for (std::size_t m = 0; m < kAllMetrics.size(); ++m) {
        const auto& j = block.at(std::string(metric_name(kAllMetrics[m])));
        auto& ci = s.stats[static_cast<std::size_t>(split)][m];
        ci.mean = as_double(j.at("mean"));
        ci.std = as_double(j.at("std"));
        ci.low = as_double(j.at("low"));
        ci.high = as_double(j.at("high"));
        ci.half_width = as_double(j.at("half_width"));
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed summary JSON: ") + e.what());
  }
  return s;
}

}  // namespace cxr
