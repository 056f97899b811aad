#include <gtest/gtest.h>

#include <sstream>

#include "cga/bridge.h"
#include "cga/error.h"
#include "cga/forecaster.h"
#include "cga/synthetic.h"
#include "test_util.h"

namespace cga {
namespace {

using testing::make_conversation;
using testing::with_split;

Corpus small_corpus() {
  return Corpus({with_split(make_conversation("a", 4, Label::kDerailing), Split::kTest),
                 with_split(make_conversation("b", 2, Label::kCivil), Split::kTest),
                 with_split(make_conversation("c", 3, Label::kCivil), Split::kVal)});
}

ExternalOptions fake(std::vector<std::string> args) {
  ExternalOptions o;
  o.command = {FAKE_ADAPTER};
  o.command.insert(o.command.end(), args.begin(), args.end());
  o.timeout = std::chrono::milliseconds(5000);
  return o;
}

TEST(CollectTraces, ConstantScorer) {
  const Corpus corpus = small_corpus();
  const TraceSet ts = collect_traces(ConstantForecaster(0.5), corpus, Split::kTest, {.seed = 3});
  ASSERT_EQ(ts.traces.size(), 2u);
  EXPECT_EQ(ts.traces.at("a"), (ForecastTrace{0.5, 0.5, 0.5}));
  EXPECT_EQ(ts.traces.at("b"), (ForecastTrace{0.5}));
  EXPECT_EQ(ts.seed, 3u);
  EXPECT_EQ(ts.context_mode, ContextMode::kFull);
  EXPECT_EQ(ts.run_id, default_run_id(ts.forecaster, ContextMode::kFull, 3));
  EXPECT_NO_THROW(validate_traces(ts, &corpus));
}

TEST(CollectTraces, WorkerCountDoesNotChangeResult) {
  const Corpus corpus = generate_synthetic(2, 40);
  const LexiconForecaster f(Lexicon{"idiot", "stupid", "thanks"}, LexiconMode::kDensity);
  const TraceSet one = collect_traces(f, corpus, Split::kTrain, {.workers = 1});
  const TraceSet four = collect_traces(f, corpus, Split::kTrain, {.workers = 4});
  EXPECT_EQ(one, four);
}

TEST(TraceFile, SaveLoadRoundTrip) {
  const Corpus corpus = generate_synthetic(4, 10);
  const LexiconForecaster f(Lexicon{"idiot", "sorry"}, LexiconMode::kMaxUtterance);
  const TraceSet ts = collect_traces(f, corpus, Split::kTrain, {.seed = 9});
  testing::TempDir dir("traces");
  save_trace_file(ts, dir / "t.jsonl");
  EXPECT_EQ(load_trace_file(dir / "t.jsonl", &corpus), ts);
  EXPECT_EQ(load_trace_file(dir / "t.jsonl"), ts);
}

TEST(TraceFile, LeakageAndLengthErrors) {
  const Corpus corpus = small_corpus();
  const std::string header = R"({"run_id":"r","context_mode":"full","seed":0,"forecaster":"x"})"
                             "\n";
  std::istringstream leak(header + R"({"conversation_id":"a","scores":[0.1,0.2,0.3,0.4]})"
                                   "\n");
  EXPECT_THROW(read_trace_file(leak, "leak", &corpus), LeakageError);

  std::istringstream short_trace(header + R"({"conversation_id":"a","scores":[0.1]})"
                                          "\n");
  try {
    read_trace_file(short_trace, "short", &corpus);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("\"a\""), std::string::npos) << e.what();
  }

  std::istringstream unknown(header + R"({"conversation_id":"zz","scores":[0.1]})"
                                      "\n");
  EXPECT_THROW(read_trace_file(unknown, "unknown", &corpus), ValidationError);

  std::istringstream range(header + R"({"conversation_id":"b","scores":[1.5]})"
                                    "\n");
  EXPECT_THROW(read_trace_file(range, "range", &corpus), ValidationError);
}

TEST(TraceFile, MalformedLine) {
  std::istringstream in(R"({"run_id":"r","context_mode":"full","seed":0})"
                        "\n{oops\n");
  try {
    read_trace_file(in, "bad.jsonl");
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(TraceFile, FiveConversationsAgainstMatchingCorpus) {
  std::vector<Conversation> convs;
  for (int i = 0; i < 5; ++i) convs.push_back(make_conversation("c" + std::to_string(i), 2 + i, Label::kCivil));
  const Corpus corpus(convs);
  std::ostringstream out;
  out << R"({"run_id":"r","context_mode":"last_only","seed":1,"forecaster":"f"})" << '\n';
  for (int i = 0; i < 5; ++i) {
    out << R"({"conversation_id":"c)" << i << R"(","scores":[)";
    for (int k = 0; k <= i; ++k) out << (k ? "," : "") << "0.25";
    out << "]}\n";
  }
  std::istringstream in(out.str());
  const TraceSet ts = read_trace_file(in, "five", &corpus);
  EXPECT_EQ(ts.traces.size(), 5u);
  EXPECT_EQ(ts.context_mode, ContextMode::kLastOnly);
}

TEST(ValidateTraces, LeakageIsAlwaysRejected) {
  const Corpus corpus = generate_synthetic(8, 25);
  for (const Conversation& c : corpus.conversations()) {
    TraceSet ts;
    ts.traces[c.id] = ForecastTrace(c.size(), 0.5);
    EXPECT_THROW(validate_traces(ts, &corpus), LeakageError) << c.id;
  }
}

TEST(Protocol, MessagesAreExact) {
  EXPECT_EQ(hello_message(), R"({"type":"hello","protocol":1})");
  EXPECT_EQ(bye_message(), R"({"type":"bye"})");
  const Conversation c = make_conversation("c1", 3, Label::kCivil, {"hi \"there\"", "ok"});
  EXPECT_EQ(forecast_message(prefix(c, 2)),
            R"({"type":"forecast","conversation_id":"c1","t":2,"utterances":[)"
            R"({"speaker":"a","text":"hi \"there\""},{"speaker":"b","text":"ok"}]})");
}

TEST(External, TableRoundTrip) {
  const Corpus corpus = small_corpus();
  testing::TempDir dir("table");
  testing::write_file(dir / "table.jsonl",
                      R"({"conversation_id":"a","t":1,"score":0.1})"
                      "\n"
                      R"({"conversation_id":"a","t":2,"score":0.42})"
                      "\n"
                      R"({"conversation_id":"a","t":3,"score":0.9})"
                      "\n"
                      R"({"conversation_id":"b","t":1,"score":0.0})"
                      "\n");
  const TraceSet ts =
      collect_traces_external(fake({"--table", (dir / "table.jsonl").string(), "--name", "tab"}), corpus, Split::kTest);
  EXPECT_EQ(ts.traces.at("a"), (ForecastTrace{0.1, 0.42, 0.9}));
  EXPECT_EQ(ts.traces.at("b"), (ForecastTrace{0.0}));
  EXPECT_EQ(ts.forecaster, "tab");
}

TEST(External, GoldenTranscript) {
  const Corpus corpus = small_corpus();
  testing::TempDir dir("golden");
  const auto log = dir / "log.txt";
  collect_traces_external(fake({"--constant", "0.25", "--transcript", log.string()}), corpus, Split::kTest);
  EXPECT_EQ(testing::read_file(log),
            "> {\"type\":\"hello\",\"protocol\":1}\n"
            "< {\"type\":\"ready\",\"name\":\"fake\",\"context_mode\":\"full\"}\n"
            "> {\"type\":\"forecast\",\"conversation_id\":\"a\",\"t\":1,\"utterances\":"
            "[{\"speaker\":\"a\",\"text\":\"w1\"}]}\n"
            "< {\"type\":\"score\",\"conversation_id\":\"a\",\"t\":1,\"score\":0.25}\n"
            "> {\"type\":\"forecast\",\"conversation_id\":\"a\",\"t\":2,\"utterances\":"
            "[{\"speaker\":\"a\",\"text\":\"w1\"},{\"speaker\":\"b\",\"text\":\"w2\"}]}\n"
            "< {\"type\":\"score\",\"conversation_id\":\"a\",\"t\":2,\"score\":0.25}\n"
            "> {\"type\":\"forecast\",\"conversation_id\":\"a\",\"t\":3,\"utterances\":"
            "[{\"speaker\":\"a\",\"text\":\"w1\"},{\"speaker\":\"b\",\"text\":\"w2\"},"
            "{\"speaker\":\"a\",\"text\":\"w3\"}]}\n"
            "< {\"type\":\"score\",\"conversation_id\":\"a\",\"t\":3,\"score\":0.25}\n"
            "> {\"type\":\"forecast\",\"conversation_id\":\"b\",\"t\":1,\"utterances\":"
            "[{\"speaker\":\"a\",\"text\":\"w1\"}]}\n"
            "< {\"type\":\"score\",\"conversation_id\":\"b\",\"t\":1,\"score\":0.25}\n"
            "> {\"type\":\"bye\"}\n");
}

TEST(External, DeterministicAcrossRuns) {
  const Corpus corpus = generate_synthetic(3, 10);
  const auto opts = fake({"--count-utterances"});
  std::ostringstream a;
  std::ostringstream b;
  write_trace_file(collect_traces_external(opts, corpus, Split::kTrain), a);
  write_trace_file(collect_traces_external(opts, corpus, Split::kTrain), b);
  EXPECT_EQ(a.str(), b.str());
}

TEST(External, FullPrefixIsResent) {
  const Corpus corpus = small_corpus();
  const TraceSet ts = collect_traces_external(fake({"--count-utterances"}), corpus, Split::kTest);
  EXPECT_EQ(ts.traces.at("a"), (ForecastTrace{0.01, 0.02, 0.03}));
}

TEST(External, LastOnlySendsOneUtterance) {
  const Corpus corpus = small_corpus();
  const TraceSet declared =
      collect_traces_external(fake({"--count-utterances", "--context-mode", "last_only"}), corpus, Split::kTest);
  EXPECT_EQ(declared.context_mode, ContextMode::kLastOnly);
  EXPECT_EQ(declared.traces.at("a"), (ForecastTrace{0.01, 0.01, 0.01}));

  ExternalOptions overridden = fake({"--count-utterances"});
  overridden.context_mode = ContextMode::kLastOnly;
  EXPECT_EQ(collect_traces_external(overridden, corpus, Split::kTest), declared);
}

TEST(External, OutOfOrderResponsesAccepted) {
  const Corpus corpus = generate_synthetic(5, 8);
  ExternalOptions opts = fake({"--count-utterances", "--reverse"});
  opts.max_in_flight = 3;
  const TraceSet ts = collect_traces_external(opts, corpus, Split::kTrain);
  const TraceSet serial = collect_traces_external(fake({"--count-utterances"}), corpus, Split::kTrain);
  EXPECT_EQ(ts, serial);
}

TEST(External, MultipleWorkers) {
  const Corpus corpus = generate_synthetic(6, 12);
  const auto opts = fake({"--count-utterances"});
  EXPECT_EQ(collect_traces_external(opts, corpus, Split::kTrain, {.workers = 3}),
            collect_traces_external(opts, corpus, Split::kTrain, {.workers = 1}));
}

void expect_protocol_error(const ExternalOptions& opts, const std::string& fragment) {
  const Corpus corpus = small_corpus();
  try {
    collect_traces_external(opts, corpus, Split::kTest);
    FAIL() << "expected a protocol error mentioning " << fragment;
  } catch (const ProtocolError& e) {
    EXPECT_NE(std::string(e.what()).find(fragment), std::string::npos) << e.what();
  }
}

TEST(External, Failures) {
  expect_protocol_error(fake({"--protocol", "2"}), "protocol-version mismatch");
  expect_protocol_error(fake({"--not-ready"}), "handshake");
  expect_protocol_error(fake({"--bad-score-at", "2"}), "outside [0, 1]");
  expect_protocol_error(fake({"--duplicate"}), "duplicate response");
  expect_protocol_error(fake({"--unknown-id-at", "1"}), "matches no request");
  expect_protocol_error(fake({"--error-at", "1"}), "scorer failed");
  expect_protocol_error(fake({"--exit-code", "3"}), "status 3");
  expect_protocol_error(fake({"--crash-at", "2"}), "while waiting for");
}

TEST(External, MissingTableEntryIsAnError) {
  testing::TempDir dir("missing");
  testing::write_file(dir / "table.jsonl", R"({"conversation_id":"a","t":1,"score":0.1})"
                                           "\n");
  expect_protocol_error(fake({"--table", (dir / "table.jsonl").string()}), "no table entry");
}

TEST(External, Timeout) {
  ExternalOptions opts = fake({"--hang-at", "1"});
  opts.timeout = std::chrono::milliseconds(300);
  expect_protocol_error(opts, "timed out");
}

TEST(External, RetryOnceRecoversFromCrash) {
  const Corpus corpus = small_corpus();
  testing::TempDir dir("retry");
  ExternalOptions opts =
      fake({"--count-utterances", "--crash-at", "2", "--once-file", (dir / "marker").string()});
  opts.retry_once = true;
  const TraceSet ts = collect_traces_external(opts, corpus, Split::kTest);
  EXPECT_EQ(ts.traces.at("a"), (ForecastTrace{0.01, 0.02, 0.03}));

  // Without the retry the same crash is fatal.
  std::filesystem::remove(dir / "marker");
  opts.retry_once = false;
  EXPECT_THROW(collect_traces_external(opts, corpus, Split::kTest), ProtocolError);
}

TEST(External, RetryOnlyOnce) {
  ExternalOptions opts = fake({"--crash-at", "1"});
  opts.retry_once = true;
  expect_protocol_error(opts, "while waiting for");
}

TEST(External, MissingExecutable) {
  ExternalOptions opts;
  opts.command = {"/nonexistent/forecaster"};
  opts.timeout = std::chrono::milliseconds(2000);
  const Corpus corpus = small_corpus();
  EXPECT_THROW(collect_traces_external(opts, corpus, Split::kTest), ProtocolError);
}

}  // namespace
}  // namespace cga
