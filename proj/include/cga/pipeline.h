#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "cga/bow.h"
#include "cga/bridge.h"
#include "cga/corpus.h"
#include "cga/eval.h"
#include "cga/report.h"
#include "cga/synthetic.h"

namespace cga {

struct SyntheticSpec {
  std::uint64_t seed = 1;
  std::size_t n_pairs = 200;
  LengthRange lengths;
  SignalParams signal;
};

// Where conversations come from: a corpus file or the synthetic generator.
struct CorpusSource {
  std::filesystem::path path;
  std::optional<SyntheticSpec> synthetic;
};

// type is one of constant, lexicon, bow, external, trace_file; the remaining
// keys of the config object are type-specific parameters.
struct ForecasterSpec {
  std::string type;
  Json params = Json::object();
};

struct RunConfig {
  CorpusSource corpus;
  ForecasterSpec forecaster;
  Split train_split = Split::kTrain;
  Split dev_split = Split::kVal;
  Split test_split = Split::kTest;
  std::vector<std::uint64_t> seeds = {1};
  std::filesystem::path output_dir = "runs";
  bool ablation = false;
  std::size_t workers = 1;
};

// Relative paths inside the config resolve against `base_dir`.
RunConfig parse_run_config(const Json& j, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);

Corpus resolve_corpus(const CorpusSource& source);

std::filesystem::path default_lexicon_path();

// Per-seed forecaster. For bow this fits on the train split; the model is
// available through `model` so it can be persisted.
struct PreparedForecaster {
  std::shared_ptr<const Forecaster> native;  // null for external and trace_file
  std::shared_ptr<const BowModel> model;
};

PreparedForecaster prepare_forecaster(const ForecasterSpec& spec, const Corpus& corpus, Split train_split,
                                      std::uint64_t seed);

// Traces for one split under the given context mode.
TraceSet forecast_split(const ForecasterSpec& spec, const PreparedForecaster& prepared, const Corpus& corpus,
                        Split split, ContextMode mode, std::uint64_t seed);

struct PipelineResult {
  AggregateReport full;
  std::optional<AggregateReport> last_only;
};

// For every seed: fit (if needed), trace dev and test, tune on dev, evaluate
// on test; then aggregate. Each (variant, seed) run is written to
// <out>/<type>-<mode>/seed-<seed>/ and appears only once complete.
PipelineResult run_pipeline(const RunConfig& config);

// run_pipeline with both context variants; writes ablation.txt.
PipelineResult run_ablation(const RunConfig& config);

// Re-evaluates a persisted run directory from its traces and threshold.
EvalReport replay_run(const std::filesystem::path& run_dir, const Corpus& corpus, Split test_split = Split::kTest);

}  // namespace cga
