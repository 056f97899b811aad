#include "cga/eval.h"

#include <algorithm>
#include <fstream>
#include <set>

#include "cga/error.h"

namespace cga {

namespace {

double ratio(std::size_t num, std::size_t den) {
  return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
}

bool correct(bool prediction, Label label) { return prediction == (label == Label::kDerailing); }

std::string split_name(Split split) { return std::string(to_string(split)); }

}  // namespace

bool Threshold::lower_than(const Threshold& other) const {
  if (below_min != other.below_min) return below_min;
  return !below_min && value < other.value;
}

BinarizedTrace binarize(std::span<const double> trace, const Threshold& threshold) {
  BinarizedTrace b;
  b.g.reserve(trace.size());
  for (std::size_t i = 0; i < trace.size(); ++i) {
    const bool fired = threshold.fires(trace[i]);
    b.g.push_back(fired ? 1 : 0);
    if (fired && !b.trigger_index) b.trigger_index = i + 1;
  }
  b.final_prediction = !b.g.empty() && b.g.back() == 1;
  return b;
}

bool conversation_forecast(const BinarizedTrace& b) { return b.trigger_index.has_value(); }

std::vector<LabeledTrace> gather(const TraceSet& traces, const Corpus& corpus, Split split) {
  std::vector<LabeledTrace> out;
  for (const Conversation* conv : corpus.in_split(split)) {
    auto it = traces.traces.find(conv->id);
    if (it == traces.traces.end()) {
      throw ValidationError("no trace for conversation \"" + conv->id + "\" in split " + split_name(split));
    }
    if (it->second.size() == conv->size()) {
      throw LeakageError("trace for \"" + conv->id + "\" includes a score for the label-bearing utterance");
    }
    if (it->second.size() != conv->forecastable()) {
      throw ValidationError("trace for \"" + conv->id + "\" has " + std::to_string(it->second.size()) +
                            " scores, expected " + std::to_string(conv->forecastable()));
    }
    out.push_back({conv->id, conv->label, it->second});
  }
  return out;
}

double Confusion::accuracy() const { return ratio(tp + tn, n()); }
double Confusion::precision() const { return ratio(tp, tp + fp); }
double Confusion::recall() const { return ratio(tp, tp + fn); }
double Confusion::fpr() const { return ratio(fp, fp + tn); }
double Confusion::f1() const {
  const double p = precision();
  const double r = recall();
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

Confusion confusion(std::span<const LabeledTrace> data, const Threshold& threshold) {
  Confusion c;
  for (const LabeledTrace& lt : data) {
    const bool predicted = conversation_forecast(binarize(lt.scores, threshold));
    const bool actual = lt.label == Label::kDerailing;
    if (predicted && actual) {
      ++c.tp;
    } else if (predicted) {
      ++c.fp;
    } else if (actual) {
      ++c.fn;
    } else {
      ++c.tn;
    }
  }
  return c;
}

Confusion confusion(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold) {
  return confusion(gather(traces, corpus, split), threshold);
}

std::optional<double> mean_horizon(std::span<const LabeledTrace> data, const Threshold& threshold) {
  std::size_t total = 0;
  std::size_t count = 0;
  for (const LabeledTrace& lt : data) {
    if (lt.label != Label::kDerailing) continue;
    const BinarizedTrace b = binarize(lt.scores, threshold);
    if (!b.trigger_index) continue;
    total += lt.conversation_length() - *b.trigger_index;
    ++count;
  }
  if (count == 0) return std::nullopt;
  return static_cast<double>(total) / static_cast<double>(count);
}

std::optional<double> mean_horizon(const TraceSet& traces, const Corpus& corpus, Split split,
                                   const Threshold& threshold) {
  return mean_horizon(gather(traces, corpus, split), threshold);
}

RecoveryStats recovery(std::span<const LabeledTrace> data, const Threshold& threshold) {
  RecoveryStats stats;
  stats.n = data.size();
  for (const LabeledTrace& lt : data) {
    const BinarizedTrace b = binarize(lt.scores, threshold);
    const bool recovered = b.trigger_index && *b.trigger_index < lt.scores.size() && !b.final_prediction;
    if (!recovered) continue;
    if (lt.label == Label::kCivil) {
      ++stats.correct;
    } else {
      ++stats.incorrect;
    }
  }
  return stats;
}

RecoveryStats recovery(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold) {
  return recovery(gather(traces, corpus, split), threshold);
}

IdentityCheck recovery_identity_check(std::span<const LabeledTrace> data, const Threshold& threshold) {
  IdentityCheck check;
  check.n = data.size();
  for (const LabeledTrace& lt : data) {
    const BinarizedTrace b = binarize(lt.scores, threshold);
    if (correct(b.final_prediction, lt.label)) ++check.correct_final;
    if (correct(conversation_forecast(b), lt.label)) ++check.correct_forecast;
  }
  const RecoveryStats stats = recovery(data, threshold);
  check.cr = stats.correct;
  check.ir = stats.incorrect;
  const auto lhs = static_cast<long long>(check.cr) - static_cast<long long>(check.ir);
  const auto rhs = static_cast<long long>(check.correct_final) - static_cast<long long>(check.correct_forecast);
  check.holds = lhs == rhs;
  check.final_accuracy = ratio(check.correct_final, check.n);
  check.forecast_accuracy = ratio(check.correct_forecast, check.n);
  return check;
}

IdentityCheck recovery_identity_check(const TraceSet& traces, const Corpus& corpus, Split split,
                                      const Threshold& threshold) {
  return recovery_identity_check(gather(traces, corpus, split), threshold);
}

Threshold tune_threshold(std::span<const LabeledTrace> dev, std::string_view tuned_on) {
  if (dev.empty()) throw ValidationError("cannot tune a threshold on an empty dev split");
  // A conversation triggers at T iff its maximum score exceeds T.
  std::vector<double> pos_max;
  std::vector<double> neg_max;
  std::set<double> candidates = {0.5};
  for (const LabeledTrace& lt : dev) {
    if (lt.scores.empty()) throw ValidationError("empty trace in dev split");
    candidates.insert(lt.scores.begin(), lt.scores.end());
    const double m = *std::max_element(lt.scores.begin(), lt.scores.end());
    (lt.label == Label::kDerailing ? pos_max : neg_max).push_back(m);
  }
  std::sort(pos_max.begin(), pos_max.end());
  std::sort(neg_max.begin(), neg_max.end());

  // Sentinel: everything triggers, so exactly the derailing ones are right.
  Threshold best = Threshold::sentinel();
  std::size_t best_correct = pos_max.size();
  for (double t : candidates) {
    const auto pos_quiet = static_cast<std::size_t>(std::upper_bound(pos_max.begin(), pos_max.end(), t) - pos_max.begin());
    const auto neg_quiet = static_cast<std::size_t>(std::upper_bound(neg_max.begin(), neg_max.end(), t) - neg_max.begin());
    const std::size_t correct_count = (pos_max.size() - pos_quiet) + neg_quiet;
    if (correct_count >= best_correct) {
      best_correct = correct_count;
      best = Threshold::fixed(t);
    }
  }
  best.tuned_on = std::string(tuned_on);
  best.selection_accuracy = ratio(best_correct, dev.size());
  return best;
}

Threshold tune_threshold(const TraceSet& dev, const Corpus& corpus, Split split) {
  return tune_threshold(gather(dev, corpus, split), to_string(split));
}

ModelSelection select_model(std::span<const TraceSet> candidates, const Corpus& corpus, Split split) {
  if (candidates.empty()) throw ValidationError("model selection needs at least one candidate");
  ModelSelection best;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const Threshold t = tune_threshold(candidates[i], corpus, split);
    if (i == 0 || t.selection_accuracy > best.threshold.selection_accuracy) best = {i, t};
  }
  return best;
}

EvalReport evaluate(const TraceSet& traces, const Corpus& corpus, Split split, const Threshold& threshold) {
  const std::vector<LabeledTrace> data = gather(traces, corpus, split);
  if (data.empty()) throw ValidationError("split " + split_name(split) + " is empty");
  EvalReport r;
  r.run_id = traces.run_id;
  r.forecaster = traces.forecaster;
  r.context_mode = traces.context_mode;
  r.split = split_name(split);
  r.seed = traces.seed;
  r.counts = confusion(data, threshold);
  r.n = r.counts.n();
  r.accuracy = r.counts.accuracy();
  r.precision = r.counts.precision();
  r.recall = r.counts.recall();
  r.f1 = r.counts.f1();
  r.fpr = r.counts.fpr();
  r.mean_horizon = mean_horizon(data, threshold);
  const RecoveryStats rec = recovery(data, threshold);
  r.cr = rec.correct;
  r.ir = rec.incorrect;
  r.cr_rate = rec.cr_rate();
  r.ir_rate = rec.ir_rate();
  r.recovery = r.cr_rate - r.ir_rate;
  r.final_prediction_accuracy = recovery_identity_check(data, threshold).final_accuracy;
  r.threshold = threshold;
  return r;
}

Json to_json(const Threshold& t) {
  Json j = Json::object();
  j["value"] = t.below_min ? Json(nullptr) : Json(t.value);
  j["below_min"] = t.below_min;
  j["tuned_on"] = t.tuned_on;
  j["selection_accuracy"] = t.selection_accuracy;
  return j;
}

Threshold threshold_from_json(const Json& j) {
  try {
    Threshold t = j.value("below_min", false) ? Threshold::sentinel() : Threshold{};
    if (!t.below_min) t.value = j.at("value").get<double>();
    t.tuned_on = j.value("tuned_on", std::string());
    t.selection_accuracy = j.value("selection_accuracy", 0.0);
    return t;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed threshold: ") + e.what());
  }
}

Json to_json(const EvalReport& r) {
  Json j = Json::object();
  j["run_id"] = r.run_id;
  j["forecaster"] = r.forecaster;
  j["context_mode"] = to_string(r.context_mode);
  j["split"] = r.split;
  j["seed"] = r.seed;
  j["n"] = r.n;
  j["counts"] = Json{{"tp", r.counts.tp}, {"fp", r.counts.fp}, {"fn", r.counts.fn}, {"tn", r.counts.tn}};
  j["accuracy"] = r.accuracy;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["f1"] = r.f1;
  j["fpr"] = r.fpr;
  j["mean_horizon"] = r.mean_horizon ? Json(*r.mean_horizon) : Json(nullptr);
  j["recovery"] = r.recovery;
  j["cr"] = r.cr;
  j["ir"] = r.ir;
  j["cr_rate"] = r.cr_rate;
  j["ir_rate"] = r.ir_rate;
  j["final_prediction_accuracy"] = r.final_prediction_accuracy;
  j["threshold"] = to_json(r.threshold);
  return j;
}

EvalReport eval_report_from_json(const Json& j) {
  try {
    EvalReport r;
    r.run_id = j.at("run_id").get<std::string>();
    r.forecaster = j.at("forecaster").get<std::string>();
    const auto mode = parse_context_mode(j.at("context_mode").get<std::string>());
    if (!mode) throw ValidationError("invalid context_mode in report");
    r.context_mode = *mode;
    r.split = j.at("split").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.n = j.at("n").get<std::size_t>();
    const Json& c = j.at("counts");
    r.counts = {c.at("tp").get<std::size_t>(), c.at("fp").get<std::size_t>(), c.at("fn").get<std::size_t>(),
                c.at("tn").get<std::size_t>()};
    r.accuracy = j.at("accuracy").get<double>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.fpr = j.at("fpr").get<double>();
    if (!j.at("mean_horizon").is_null()) r.mean_horizon = j["mean_horizon"].get<double>();
    r.recovery = j.at("recovery").get<double>();
    r.cr = j.at("cr").get<std::size_t>();
    r.ir = j.at("ir").get<std::size_t>();
    r.cr_rate = j.at("cr_rate").get<double>();
    r.ir_rate = j.at("ir_rate").get<double>();
    r.final_prediction_accuracy = j.at("final_prediction_accuracy").get<double>();
    r.threshold = threshold_from_json(j.at("threshold"));
    return r;
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("malformed eval report: ") + e.what());
  }
}

namespace {

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

}  // namespace

void save_threshold(const Threshold& threshold, const std::filesystem::path& path) {
  write_json(to_json(threshold), path);
}
Threshold load_threshold(const std::filesystem::path& path) { return threshold_from_json(read_json(path)); }
void save_eval_report(const EvalReport& report, const std::filesystem::path& path) {
  write_json(to_json(report), path);
}
EvalReport load_eval_report(const std::filesystem::path& path) { return eval_report_from_json(read_json(path)); }

}  // namespace cga
