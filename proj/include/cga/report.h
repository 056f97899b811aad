#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cga/eval.h"

namespace cga {

// Rounds half to even at one decimal place and prints e.g. "12.0". Values
// within 1e-9 of a tie are treated as exact ties.
std::string format_tenths(double value);
// A fraction rendered as a percentage: 0.12 -> "12.0".
std::string format_percent(double fraction);
// "+4.9 (12.0 − 7.1)" from fractional recovery, CR/N and IR/N.
std::string format_recovery(double recovery, double cr_rate, double ir_rate);
// Signed difference cell, e.g. "+1.0" or "−3.5".
std::string format_signed_percent(double fraction);

struct MetricMeans {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  std::optional<double> mean_horizon;  // over runs that have one
  double recovery = 0.0;               // always cr_rate - ir_rate
  double cr_rate = 0.0;
  double ir_rate = 0.0;

  friend bool operator==(const MetricMeans&, const MetricMeans&) = default;
};

struct AggregateReport {
  std::string forecaster;
  ContextMode context_mode = ContextMode::kFull;
  std::vector<EvalReport> runs;
  MetricMeans mean;

  friend bool operator==(const AggregateReport&, const AggregateReport&) = default;
};

AggregateReport aggregate(std::vector<EvalReport> runs);

Json to_json(const AggregateReport& report);
AggregateReport aggregate_report_from_json(const Json& j);
void save_aggregate_report(const AggregateReport& report, const std::filesystem::path& path);
AggregateReport load_aggregate_report(const std::filesystem::path& path);

// One row per report: Acc, P, R, F1, FPR, Mean H, Recovery.
std::string render_table(std::span<const AggregateReport> reports);

// Context yes/no rows with Acc, F1, Recovery, plus a delta row.
std::string render_ablation(const AggregateReport& full, const AggregateReport& last_only);

}  // namespace cga
