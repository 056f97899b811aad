#include "cga/report.h"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "cga/error.h"

namespace cga {

namespace {

constexpr const char* kMinus = "−";
constexpr const char* kAbsent = "—";

double round_half_even_tenths(double value) {
  const double x = value * 10.0;
  const double lower = std::floor(x);
  const double frac = x - lower;
  double rounded;
  if (std::fabs(frac - 0.5) < 1e-9) {
    rounded = std::fmod(lower, 2.0) == 0.0 ? lower : lower + 1.0;
  } else {
    rounded = std::round(x);
  }
  return rounded / 10.0;
}

std::string tenths_magnitude(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f", std::fabs(round_half_even_tenths(value)));
  return buf;
}

std::string signed_tenths(double value) {
  const double r = round_half_even_tenths(value);
  return std::string(r < 0.0 ? kMinus : "+") + tenths_magnitude(value);
}

// Display width in code points, so multi-byte glyphs pad correctly.
std::size_t display_width(const std::string& s) {
  std::size_t w = 0;
  for (unsigned char c : s) {
    if ((c & 0xC0) != 0x80) ++w;
  }
  return w;
}

std::string render_grid(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> widths;
  for (const auto& row : rows) {
    if (widths.size() < row.size()) widths.resize(row.size(), 0);
    for (std::size_t i = 0; i < row.size(); ++i) widths[i] = std::max(widths[i], display_width(row[i]));
  }
  std::ostringstream out;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::string line;
    for (std::size_t i = 0; i < rows[r].size(); ++i) {
      if (i > 0) line += " | ";
      line += rows[r][i];
      if (i + 1 < rows[r].size()) line.append(widths[i] - display_width(rows[r][i]), ' ');
    }
    out << line << '\n';
    if (r == 0) {
      std::size_t total = 0;
      for (std::size_t w : widths) total += w;
      out << std::string(total + 3 * (widths.size() - 1), '-') << '\n';
    }
  }
  return out.str();
}

std::string row_label(const AggregateReport& r) {
  return r.context_mode == ContextMode::kFull ? r.forecaster : r.forecaster + " [last_only]";
}

}  // namespace

std::string format_tenths(double value) {
  const double r = round_half_even_tenths(value);
  return (r < 0.0 ? std::string(kMinus) : std::string()) + tenths_magnitude(value);
}

std::string format_percent(double fraction) { return format_tenths(fraction * 100.0); }

std::string format_signed_percent(double fraction) { return signed_tenths(fraction * 100.0); }

std::string format_recovery(double recovery, double cr_rate, double ir_rate) {
  return signed_tenths(recovery * 100.0) + " (" + format_percent(cr_rate) + " " + kMinus + " " +
         format_percent(ir_rate) + ")";
}

AggregateReport aggregate(std::vector<EvalReport> runs) {
  if (runs.empty()) throw ValidationError("cannot aggregate zero runs");
  AggregateReport agg;
  agg.forecaster = runs.front().forecaster;
  agg.context_mode = runs.front().context_mode;
  const auto k = static_cast<double>(runs.size());
  double horizon_sum = 0.0;
  std::size_t horizon_count = 0;
  for (const EvalReport& r : runs) {
    agg.mean.accuracy += r.accuracy / k;
    agg.mean.precision += r.precision / k;
    agg.mean.recall += r.recall / k;
    agg.mean.f1 += r.f1 / k;
    agg.mean.fpr += r.fpr / k;
    agg.mean.cr_rate += r.cr_rate / k;
    agg.mean.ir_rate += r.ir_rate / k;
    if (r.mean_horizon) {
      horizon_sum += *r.mean_horizon;
      ++horizon_count;
    }
  }
  agg.mean.recovery = agg.mean.cr_rate - agg.mean.ir_rate;
  if (horizon_count > 0) agg.mean.mean_horizon = horizon_sum / static_cast<double>(horizon_count);
  agg.runs = std::move(runs);
  return agg;
}

Json to_json(const AggregateReport& report) {
  Json mean = Json::object();
  mean["accuracy"] = report.mean.accuracy;
  mean["precision"] = report.mean.precision;
  mean["recall"] = report.mean.recall;
  mean["f1"] = report.mean.f1;
  mean["fpr"] = report.mean.fpr;
  mean["mean_horizon"] = report.mean.mean_horizon ? Json(*report.mean.mean_horizon) : Json(nullptr);
  mean["recovery"] = report.mean.recovery;
  mean["cr_rate"] = report.mean.cr_rate;
  mean["ir_rate"] = report.mean.ir_rate;
  Json j = Json::object();
  j["forecaster"] = report.forecaster;
  j["context_mode"] = to_string(report.context_mode);
  j["n_runs"] = report.runs.size();
  j["mean"] = std::move(mean);
  Json runs = Json::array();
  for (const EvalReport& r : report.runs) runs.push_back(to_json(r));
  j["runs"] = std::move(runs);
  return j;
}

AggregateReport aggregate_report_from_json(const Json& j) {
  try {
    std::vector<EvalReport> runs;
    for (const Json& r : j.at("runs")) runs.push_back(eval_report_from_json(r));
    return aggregate(std::move(runs));
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed aggregate report: ") + e.what());
  }
}

void save_aggregate_report(const AggregateReport& report, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << to_json(report).dump(2) << '\n';
}

AggregateReport load_aggregate_report(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return aggregate_report_from_json(Json::parse(in));
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

std::string render_table(std::span<const AggregateReport> reports) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model", "Acc", "P", "R", "F1", "FPR", "Mean H", std::string("Recovery (CR/N ") + kMinus + " IR/N)"});
  for (const AggregateReport& r : reports) {
    const MetricMeans& m = r.mean;
    rows.push_back({row_label(r), format_percent(m.accuracy), format_percent(m.precision), format_percent(m.recall),
                    format_percent(m.f1), format_percent(m.fpr),
                    m.mean_horizon ? format_tenths(*m.mean_horizon) : std::string(kAbsent),
                    format_recovery(m.recovery, m.cr_rate, m.ir_rate)});
  }
  return render_grid(rows);
}

std::string render_ablation(const AggregateReport& full, const AggregateReport& last_only) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"Model", "Context", "Acc", "F1", std::string("Recovery (CR/N ") + kMinus + " IR/N)"});
  rows.push_back({full.forecaster, "Yes", format_percent(full.mean.accuracy), format_percent(full.mean.f1),
                  format_recovery(full.mean.recovery, full.mean.cr_rate, full.mean.ir_rate)});
  rows.push_back({"", "No", format_percent(last_only.mean.accuracy), format_percent(last_only.mean.f1),
                  format_recovery(last_only.mean.recovery, last_only.mean.cr_rate, last_only.mean.ir_rate)});
  rows.push_back({"", std::string("Δ (Yes ") + kMinus + " No)",
                  format_signed_percent(full.mean.accuracy - last_only.mean.accuracy),
                  format_signed_percent(full.mean.f1 - last_only.mean.f1),
                  format_signed_percent(full.mean.recovery - last_only.mean.recovery)});
  return render_grid(rows);
}

}  // namespace cga
