#include "cga/bridge.h"

#include <cmath>
#include <exception>
#include <fstream>
#include <istream>
#include <memory>
#include <mutex>
#include <ostream>
#include <set>
#include <thread>

#include "cga/error.h"
#include "cga/subprocess.h"

namespace cga {

namespace {

// Crashes and timeouts; the only failures eligible for a retry.
class TransportError : public ProtocolError {
 public:
  using ProtocolError::ProtocolError;
};

bool valid_score(double s) { return std::isfinite(s) && s >= 0.0 && s <= 1.0; }

std::string describe_key(const std::string& conv, std::size_t t) {
  return "(\"" + conv + "\", t=" + std::to_string(t) + ")";
}

// Splits conversation indices round-robin over `workers` shards.
std::vector<std::vector<const Conversation*>> shard(const std::vector<const Conversation*>& convs,
                                                    std::size_t workers) {
  workers = std::max<std::size_t>(1, std::min(workers, convs.size()));
  std::vector<std::vector<const Conversation*>> shards(workers);
  for (std::size_t i = 0; i < convs.size(); ++i) shards[i % workers].push_back(convs[i]);
  return shards;
}

template <typename Fn>
void run_parallel(std::size_t n, Fn&& fn) {
  if (n <= 1) {
    if (n == 1) fn(0);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  std::vector<std::thread> threads;
  for (std::size_t i = 0; i < n; ++i) {
    threads.emplace_back([&, i] {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (std::thread& t : threads) t.join();
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

class ExternalSession {
 public:
  explicit ExternalSession(const ExternalOptions& opts) : opts_(opts), process_(opts.command) {
    send(hello_message());
    const Json ready = receive("handshake");
    if (ready.value("type", std::string()) != "ready") {
      throw ProtocolError("handshake failed: expected a ready message, got " + ready.dump());
    }
    if (auto it = ready.find("protocol"); it != ready.end() && *it != kProtocolVersion) {
      throw ProtocolError("protocol-version mismatch: process speaks " + it->dump() + ", expected " +
                          std::to_string(kProtocolVersion));
    }
    if (!ready.contains("name") || !ready["name"].is_string()) throw ProtocolError("ready message lacks a name");
    std::optional<ContextMode> mode =
        ready.contains("context_mode") && ready["context_mode"].is_string()
            ? parse_context_mode(ready["context_mode"].get<std::string>())
            : std::nullopt;
    if (!mode) throw ProtocolError("ready message has an invalid context_mode");
    name_ = ready["name"].get<std::string>();
    declared_ = *mode;
  }

  void send(const std::string& line) {
    try {
      process_.write_line(line);
    } catch (const ProtocolError& e) {
      throw TransportError(e.what());
    }
  }

  Json receive(const std::string& waiting_for) {
    std::optional<std::string> line;
    try {
      line = process_.read_line(opts_.timeout);
    } catch (const ProtocolError& e) {
      throw TransportError(std::string(e.what()) + " while waiting for " + waiting_for);
    }
    if (!line) {
      throw TransportError("external process timed out after " + std::to_string(opts_.timeout.count()) +
                           " ms while waiting for " + waiting_for);
    }
    try {
      Json msg = Json::parse(*line);
      if (!msg.is_object()) throw ProtocolError("message is not a JSON object: " + *line);
      return msg;
    } catch (const Json::parse_error&) {
      throw ProtocolError("malformed message from external process: " + *line);
    }
  }

  void shutdown() {
    send(bye_message());
    process_.close_stdin();
    const std::optional<int> status = process_.wait(opts_.timeout);
    if (!status) {
      process_.kill();
      throw ProtocolError("external process did not exit after bye");
    }
    if (*status != 0) throw ProtocolError("external process exited with status " + std::to_string(*status));
  }

  const std::string& name() const { return name_; }
  ContextMode declared() const { return declared_; }

 private:
  const ExternalOptions& opts_;
  Subprocess process_;
  std::string name_;
  ContextMode declared_ = ContextMode::kFull;
};

struct ShardResult {
  std::map<std::string, ForecastTrace, std::less<>> traces;
  std::string name;
  ContextMode mode = ContextMode::kFull;
};

ShardResult run_external_shard(const ExternalOptions& opts, const std::vector<const Conversation*>& convs) {
  struct Request {
    const Conversation* conv;
    std::size_t t;
  };
  std::vector<Request> requests;
  ShardResult result;
  for (const Conversation* c : convs) {
    result.traces[c->id].assign(c->forecastable(), 0.0);
    for (std::size_t t = 1; t <= c->forecastable(); ++t) requests.push_back({c, t});
  }

  auto session = std::make_unique<ExternalSession>(opts);
  result.name = session->name();
  result.mode = opts.context_mode.value_or(session->declared());
  const std::size_t window = std::max<std::size_t>(1, opts.max_in_flight);

  using Key = std::pair<std::string, std::size_t>;
  std::map<Key, std::size_t> pending;  // key -> request index
  std::set<Key> answered;
  std::size_t next = 0;
  bool retried = false;

  const auto send_request = [&](std::size_t i) {
    const Request& r = requests[i];
    PrefixView view = prefix(*r.conv, r.t);
    if (result.mode == ContextMode::kLastOnly) view = view.most_recent_only();
    session->send(forecast_message(view));
  };

  while (answered.size() < requests.size()) {
    try {
      while (pending.size() < window && next < requests.size()) {
        pending.emplace(Key{requests[next].conv->id, requests[next].t}, next);
        send_request(next);
        ++next;
      }
      const auto& [first_key, first_idx] = *pending.begin();
      const Json msg = session->receive("a response to " + describe_key(first_key.first, first_key.second));
      const std::string type = msg.value("type", std::string());
      if (type == "error") {
        throw ProtocolError("external process reported an error: " + msg.value("message", msg.dump()));
      }
      if (type != "score") throw ProtocolError("unexpected message type \"" + type + "\": " + msg.dump());
      if (!msg.contains("conversation_id") || !msg["conversation_id"].is_string() || !msg.contains("t") ||
          !msg["t"].is_number_integer() || !msg.contains("score") || !msg["score"].is_number()) {
        throw ProtocolError("malformed score message: " + msg.dump());
      }
      const std::int64_t t_raw = msg["t"].get<std::int64_t>();
      const Key key{msg["conversation_id"].get<std::string>(), t_raw < 0 ? 0 : static_cast<std::size_t>(t_raw)};
      if (answered.contains(key)) throw ProtocolError("duplicate response for " + describe_key(key.first, key.second));
      auto it = pending.find(key);
      if (it == pending.end()) {
        throw ProtocolError("response for " + describe_key(key.first, key.second) + " matches no request");
      }
      const double score = msg["score"].get<double>();
      if (!valid_score(score)) {
        throw ProtocolError("score " + msg["score"].dump() + " for " + describe_key(key.first, key.second) +
                            " is outside [0, 1]");
      }
      result.traces[key.first][key.second - 1] = score;
      answered.insert(key);
      pending.erase(it);
    } catch (const TransportError&) {
      if (!opts.retry_once || retried) throw;
      retried = true;
      session = std::make_unique<ExternalSession>(opts);
      for (const auto& [key, idx] : pending) send_request(idx);
    }
  }
  session->shutdown();
  return result;
}

}  // namespace

void validate_traces(const TraceSet& traces, const Corpus* corpus) {
  for (const auto& [id, trace] : traces.traces) {
    if (trace.empty()) throw ValidationError("trace for \"" + id + "\" is empty");
    for (std::size_t i = 0; i < trace.size(); ++i) {
      if (!valid_score(trace[i])) {
        throw ValidationError("trace for \"" + id + "\": score at t=" + std::to_string(i + 1) + " outside [0, 1]");
      }
    }
    if (corpus == nullptr) continue;
    const Conversation* conv = corpus->find(id);
    if (conv == nullptr) throw ValidationError("trace for unknown conversation \"" + id + "\"");
    if (trace.size() == conv->size()) {
      throw LeakageError("trace for \"" + id + "\" has " + std::to_string(trace.size()) +
                         " scores, including one for the label-bearing utterance");
    }
    if (trace.size() != conv->forecastable()) {
      throw ValidationError("trace for \"" + id + "\" has " + std::to_string(trace.size()) + " scores, expected " +
                            std::to_string(conv->forecastable()));
    }
  }
}

std::string default_run_id(const std::string& forecaster, ContextMode mode, std::uint64_t seed) {
  return forecaster + "-" + std::string(to_string(mode)) + "-seed" + std::to_string(seed);
}

TraceSet collect_traces(const Forecaster& forecaster, const Corpus& corpus, Split split,
                        const CollectOptions& options) {
  const ForecasterDescriptor desc = forecaster.descriptor();
  TraceSet out;
  out.forecaster = desc.name;
  out.context_mode = desc.context_mode;
  out.seed = options.seed;
  out.run_id = options.run_id.empty() ? default_run_id(desc.name, desc.context_mode, options.seed) : options.run_id;

  const auto shards = shard(corpus.in_split(split), options.workers);
  std::vector<std::map<std::string, ForecastTrace, std::less<>>> partial(shards.size());
  run_parallel(shards.size(), [&](std::size_t w) {
    for (const Conversation* conv : shards[w]) {
      ForecastTrace trace;
      trace.reserve(conv->forecastable());
      for (std::size_t t = 1; t <= conv->forecastable(); ++t) {
        const double s = forecaster.score(prefix(*conv, t));
        if (!valid_score(s)) {
          throw ValidationError(desc.name + " produced score outside [0, 1] for " + describe_key(conv->id, t));
        }
        trace.push_back(s);
      }
      partial[w].emplace(conv->id, std::move(trace));
    }
  });
  for (auto& p : partial) out.traces.merge(p);
  return out;
}

std::string hello_message() {
  Json j = Json::object();
  j["type"] = "hello";
  j["protocol"] = kProtocolVersion;
  return j.dump();
}

std::string bye_message() {
  Json j = Json::object();
  j["type"] = "bye";
  return j.dump();
}

std::string forecast_message(const PrefixView& view) {
  Json j = Json::object();
  j["type"] = "forecast";
  j["conversation_id"] = view.conversation_id();
  j["t"] = view.t();
  Json utts = Json::array();
  for (const Utterance& u : view.utterances()) {
    Json uj = Json::object();
    uj["speaker"] = u.speaker;
    uj["text"] = u.text;
    utts.push_back(std::move(uj));
  }
  j["utterances"] = std::move(utts);
  return j.dump(-1, ' ', false, Json::error_handler_t::replace);
}

TraceSet collect_traces_external(const ExternalOptions& external, const Corpus& corpus, Split split,
                                 const CollectOptions& options) {
  const auto shards = shard(corpus.in_split(split), options.workers);
  std::vector<ShardResult> results(shards.size());
  run_parallel(shards.size(), [&](std::size_t w) { results[w] = run_external_shard(external, shards[w]); });

  TraceSet out;
  out.seed = options.seed;
  if (!results.empty()) {
    out.forecaster = results.front().name;
    out.context_mode = results.front().mode;
  } else {
    out.forecaster = external.command.front();
    out.context_mode = external.context_mode.value_or(ContextMode::kFull);
  }
  for (ShardResult& r : results) {
    if (r.name != out.forecaster || r.mode != out.context_mode) {
      throw ProtocolError("external workers disagree on forecaster name or context mode");
    }
    out.traces.merge(r.traces);
  }
  out.run_id = options.run_id.empty() ? default_run_id(out.forecaster, out.context_mode, options.seed) : options.run_id;
  validate_traces(out, &corpus);
  return out;
}

void write_trace_file(const TraceSet& traces, std::ostream& out) {
  Json header = Json::object();
  header["run_id"] = traces.run_id;
  header["context_mode"] = to_string(traces.context_mode);
  header["seed"] = traces.seed;
  header["forecaster"] = traces.forecaster;
  out << header.dump() << '\n';
  for (const auto& [id, trace] : traces.traces) {
    Json line = Json::object();
    line["conversation_id"] = id;
    line["scores"] = trace;
    out << line.dump() << '\n';
  }
}

void save_trace_file(const TraceSet& traces, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write trace file " + path.string());
  write_trace_file(traces, out);
}

TraceSet read_trace_file(std::istream& in, const std::string& source, const Corpus* corpus) {
  TraceSet traces;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (!j.is_object()) throw ParseError(source, line_no, "expected a JSON object");
    try {
      if (!have_header) {
        if (!j.contains("run_id")) throw ParseError(source, line_no, "missing trace-file header");
        traces.run_id = j.at("run_id").get<std::string>();
        const auto mode = parse_context_mode(j.at("context_mode").get<std::string>());
        if (!mode) throw ParseError(source, line_no, "invalid context_mode");
        traces.context_mode = *mode;
        traces.seed = j.at("seed").get<std::uint64_t>();
        traces.forecaster = j.value("forecaster", std::string());
        have_header = true;
        continue;
      }
      const std::string id = j.at("conversation_id").get<std::string>();
      const Json& scores = j.at("scores");
      if (!scores.is_array()) throw ParseError(source, line_no, "scores must be an array");
      ForecastTrace trace;
      for (const Json& s : scores) {
        if (!s.is_number()) throw ParseError(source, line_no, "scores must be numbers");
        trace.push_back(s.get<double>());
      }
      if (!traces.traces.emplace(id, std::move(trace)).second) {
        throw ParseError(source, line_no, "duplicate trace for \"" + id + "\"");
      }
    } catch (const Json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(source, line_no, "empty trace file");
  validate_traces(traces, corpus);
  return traces;
}

TraceSet load_trace_file(const std::filesystem::path& path, const Corpus* corpus) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open trace file " + path.string());
  return read_trace_file(in, path.string(), corpus);
}

TraceSet merge_traces(const TraceSet& a, const TraceSet& b) {
  if (a.context_mode != b.context_mode || a.forecaster != b.forecaster) {
    throw ValidationError("cannot merge traces from different forecasters or context modes");
  }
  TraceSet out = a;
  for (const auto& [id, trace] : b.traces) {
    if (!out.traces.emplace(id, trace).second) throw ValidationError("conversation \"" + id + "\" traced twice");
  }
  return out;
}

}  // namespace cga
