#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "cga/corpus.h"
#include "cga/forecaster.h"

namespace cga {

// Per-timestamp scores y_1 .. y_{N_c - 1} for one conversation.
using ForecastTrace = std::vector<double>;

struct TraceSet {
  std::string run_id;
  ContextMode context_mode = ContextMode::kFull;
  std::map<std::string, ForecastTrace, std::less<>> traces;
  std::string forecaster;
  std::uint64_t seed = 0;

  friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

// Scores must be finite and in [0, 1]. With a corpus, every trace must belong
// to a known conversation and hold exactly N_c - 1 scores; a trace of length
// N_c raises LeakageError.
void validate_traces(const TraceSet& traces, const Corpus* corpus = nullptr);

std::string default_run_id(const std::string& forecaster, ContextMode mode, std::uint64_t seed);

struct CollectOptions {
  std::uint64_t seed = 0;
  std::string run_id;  // empty: default_run_id(...)
  std::size_t workers = 1;
};

// One score per (conversation, t) for every conversation of `split`,
// presenting prefix(conv, t) to the forecaster.
TraceSet collect_traces(const Forecaster& forecaster, const Corpus& corpus, Split split,
                        const CollectOptions& options = {});

inline constexpr int kProtocolVersion = 1;

struct ExternalOptions {
  std::vector<std::string> command;
  std::chrono::milliseconds timeout{60000};
  bool retry_once = false;
  // Overrides the context mode the process declares in its handshake.
  std::optional<ContextMode> context_mode;
  // Outstanding requests per process. Responses are matched by
  // (conversation_id, t), so any order is accepted.
  std::size_t max_in_flight = 1;
};

// Protocol messages, serialized exactly as they go over the wire.
std::string hello_message();
std::string bye_message();
std::string forecast_message(const PrefixView& view);

// Drives external forecaster processes over the newline-delimited JSON
// protocol. Each worker owns one process and a disjoint shard of the split.
TraceSet collect_traces_external(const ExternalOptions& external, const Corpus& corpus, Split split,
                                 const CollectOptions& options = {});

// Header line {"run_id","context_mode","seed","forecaster"}, then one
// {"conversation_id","scores"} line per conversation in id order.
void write_trace_file(const TraceSet& traces, std::ostream& out);
void save_trace_file(const TraceSet& traces, const std::filesystem::path& path);
TraceSet read_trace_file(std::istream& in, const std::string& source = "<stream>", const Corpus* corpus = nullptr);
TraceSet load_trace_file(const std::filesystem::path& path, const Corpus* corpus = nullptr);

// Merges trace sets (for instance dev and test) sharing run metadata.
TraceSet merge_traces(const TraceSet& a, const TraceSet& b);

}  // namespace cga
