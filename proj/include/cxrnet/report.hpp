#pragma once

#include <string>
#include <utility>
#include <vector>

#include "cxrnet/metrics.hpp"

namespace cxr {

/// Two-block text table (internal, then external), one row per metric with
/// LHS 95% CI / Value / RHS 95% CI rounded to the thousandth.
std::string render_summary_table(const CVSummary& summary);

/// Multi-run comparison: accuracy, #1 recall (COVID-19) and #2 recall
/// (No Finding) for each split, cells formatted as "93.9_{-3.4}^{+3.4}%".
std::string render_comparison_table(const std::vector<std::pair<std::string, CVSummary>>& runs);

/// Long-format CSV for plotting: run,split,metric,lhs95,value,rhs95 at full
/// precision.
std::string render_plot_csv(const std::vector<std::pair<std::string, CVSummary>>& runs);

}  // namespace cxr
