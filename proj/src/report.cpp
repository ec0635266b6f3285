#include "cxrnet/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <sstream>

namespace cxr {

namespace {

std::string full_precision(double v) {
  if (!std::isfinite(v)) return "nan";
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string pad_right(const std::string& s, std::size_t width) {
  // Width counts code points so "±" and friends align.
  std::size_t cps = 0;
  for (unsigned char c : s) cps += (c & 0xC0) != 0x80;
  return cps >= width ? s : s + std::string(width - cps, ' ');
}

}  // namespace

std::string render_summary_table(const CVSummary& summary) {
  std::ostringstream os;
  const char* titles[] = {"Internal / Training Set", "External / Testing Set"};
  for (auto split : {Split::Internal, Split::External}) {
    os << titles[static_cast<std::size_t>(split)] << '\n';
    os << pad_right("Measure", 24) << std::setw(12) << "LHS 95% CI" << std::setw(10) << "Value" << std::setw(12)
       << "RHS 95% CI" << '\n';
    for (auto m : kAllMetrics) {
      const auto& ci = summary.at(split, m);
      os << pad_right(std::string(metric_name(m)), 24) << std::setw(12) << format_fixed(ci.low, 3) << std::setw(10)
         << format_fixed(ci.mean, 3) << std::setw(12) << format_fixed(ci.high, 3) << '\n';
    }
    if (split == Split::Internal) os << '\n';
  }
  return os.str();
}

std::string render_comparison_table(const std::vector<std::pair<std::string, CVSummary>>& runs) {
  const Metric cols[] = {Metric::Accuracy, Metric::Covid19Recall, Metric::NoFindingRecall};
  const char* col_names[] = {"Accuracy", "#1 Recall", "#2 Recall"};
  std::size_t net_width = 4;
  for (std::size_t i = 0; i < runs.size(); ++i) {
    net_width = std::max(net_width, ("(" + std::to_string(i + 1) + ") " + runs[i].first).size() + 1);
  }
  constexpr std::size_t kCell = 24;
  std::ostringstream os;
  os << pad_right("", net_width) << "| " << pad_right("Internal / Training Set", 3 * kCell) << "| "
     << "External / Testing Set" << '\n';
  os << pad_right("Net", net_width) << "| ";
  for (int split = 0; split < 2; ++split) {
    for (const char* n : col_names) os << pad_right(n, kCell);
    if (split == 0) os << "| ";
  }
  os << '\n';
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& s = runs[i].second;
    os << pad_right("(" + std::to_string(i + 1) + ") " + runs[i].first, net_width) << "| ";
    for (auto split : {Split::Internal, Split::External}) {
      for (auto m : cols) {
        const auto& ci = s.at(split, m);
        os << pad_right(format_percent_bounds(ci.mean, ci.low, ci.high), kCell);
      }
      if (split == Split::Internal) os << "| ";
    }
    os << '\n';
  }
  std::string text = os.str();
  // Drop trailing spaces so the output diffs cleanly.
  std::string out;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    line.erase(line.find_last_not_of(' ') + 1);
    out += line + '\n';
  }
  return out;
}

std::string render_plot_csv(const std::vector<std::pair<std::string, CVSummary>>& runs) {
  std::ostringstream os;
  os << "run,split,metric,lhs95,value,rhs95\n";
  for (const auto& [name, s] : runs) {
    for (auto split : {Split::Internal, Split::External}) {
      for (auto m : kAllMetrics) {
        const auto& ci = s.at(split, m);
        os << name << ',' << split_name(split) << ',' << metric_name(m) << ',' << full_precision(ci.low) << ','
           << full_precision(ci.mean) << ',' << full_precision(ci.high) << '\n';
      }
    }
  }
  return os.str();
}

}  // namespace cxr
