#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "cga/bridge.h"
#include "cga/corpus.h"

namespace cga {

// Trigger threshold T: g_t = 1 iff y_t > T. The below-min sentinel sits
// strictly under every possible score, so every timestamp triggers.
struct Threshold {
  double value = 0.5;
  bool below_min = false;
  std::string tuned_on;
  double selection_accuracy = 0.0;

  static Threshold fixed(double value) { return Threshold{value, false, {}, 0.0}; }
  static Threshold sentinel() { return Threshold{0.0, true, {}, 0.0}; }

  bool fires(double score) const { return below_min || score > value; }
  // Orders sentinel first, then by value.
  bool lower_than(const Threshold& other) const;

  friend bool operator==(const Threshold&, const Threshold&) = default;
};

struct BinarizedTrace {
  std::vector<std::uint8_t> g;
  std::optional<std::size_t> trigger_index;  // 1-based first t with g_t = 1
  bool final_prediction = false;             // g_{N_c - 1}
};

BinarizedTrace binarize(std::span<const double> trace, const Threshold& threshold);

// 1 iff the model ever triggers.
bool conversation_forecast(const BinarizedTrace& b);

// One conversation of an evaluation split: its label and N_c - 1 scores.
struct LabeledTrace {
  std::string_view conversation_id;
  Label label = Label::kCivil;
  std::span<const double> scores;

  std::size_t conversation_length() const { return scores.size() + 1; }
};

// Pairs every conversation of `split` with its trace. Throws ValidationError
// for a missing trace and LeakageError/ValidationError for a bad length.
std::vector<LabeledTrace> gather(const TraceSet& traces, const Corpus& corpus, Split split);

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tn = 0;

  std::size_t n() const { return tp + fp + fn + tn; }
  double accuracy() const;
  double precision() const;
  double recall() const;
  double f1() const;
  double fpr() const;

  friend bool operator==(const Confusion&, const Confusion&) = default;
};

Confusion confusion(std::span<const LabeledTrace> data, const Threshold& threshold);
Confusion confusion(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold);

// Mean of N_c - trigger_index over true positives; nullopt without any.
std::optional<double> mean_horizon(std::span<const LabeledTrace> data, const Threshold& threshold);
std::optional<double> mean_horizon(const TraceSet& traces, const Corpus& corpus, Split split,
                                   const Threshold& threshold);

// A recovery: the first trigger happens before N_c - 1 and the final
// prediction is 0. Correct on civil conversations, incorrect on derailing ones.
struct RecoveryStats {
  std::size_t correct = 0;    // CR
  std::size_t incorrect = 0;  // IR
  std::size_t n = 0;

  double cr_rate() const { return n == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(n); }
  double ir_rate() const { return n == 0 ? 0.0 : static_cast<double>(incorrect) / static_cast<double>(n); }
  double recovery() const {
    return n == 0 ? 0.0
                  : (static_cast<double>(correct) - static_cast<double>(incorrect)) / static_cast<double>(n);
  }
};

RecoveryStats recovery(std::span<const LabeledTrace> data, const Threshold& threshold);
RecoveryStats recovery(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold);

struct IdentityCheck {
  bool holds = false;
  std::size_t correct_final = 0;     // #Corr(g_{N_c - 1})
  std::size_t correct_forecast = 0;  // #Corr(conversation-level forecast)
  std::size_t cr = 0;
  std::size_t ir = 0;
  std::size_t n = 0;
  double final_accuracy = 0.0;
  double forecast_accuracy = 0.0;
};

// Recovery two ways: (CR - IR) and #Corr(final) - #Corr(forecast), compared
// on integer counts.
IdentityCheck recovery_identity_check(std::span<const LabeledTrace> data, const Threshold& threshold);
IdentityCheck recovery_identity_check(const TraceSet& traces, const Corpus& corpus, Split split,
                                      const Threshold& threshold);

// Sweeps every distinct score, 0.5 and the below-min sentinel; keeps the
// candidate with the highest accuracy, the largest one on ties.
Threshold tune_threshold(std::span<const LabeledTrace> dev, std::string_view tuned_on = "val");
Threshold tune_threshold(const TraceSet& dev, const Corpus& corpus, Split split = Split::kVal);

struct ModelSelection {
  std::size_t index = 0;
  Threshold threshold;
};

// Tunes each candidate on `split` and keeps the most accurate one; ties go
// to the earlier candidate.
ModelSelection select_model(std::span<const TraceSet> candidates, const Corpus& corpus, Split split = Split::kVal);

struct EvalReport {
  std::string run_id;
  std::string forecaster;
  ContextMode context_mode = ContextMode::kFull;
  std::string split;
  std::uint64_t seed = 0;
  Confusion counts;
  std::size_t n = 0;
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  double fpr = 0.0;
  std::optional<double> mean_horizon;
  double recovery = 0.0;
  std::size_t cr = 0;
  std::size_t ir = 0;
  double cr_rate = 0.0;
  double ir_rate = 0.0;
  double final_prediction_accuracy = 0.0;
  Threshold threshold;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

EvalReport evaluate(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold);

Json to_json(const Threshold& threshold);
Threshold threshold_from_json(const Json& j);
Json to_json(const EvalReport& report);
EvalReport eval_report_from_json(const Json& j);

void save_threshold(const Threshold& threshold, const std::filesystem::path& path);
Threshold load_threshold(const std::filesystem::path& path);
void save_eval_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_eval_report(const std::filesystem::path& path);

}  // namespace cga
