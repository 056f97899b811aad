// Table-backed external forecaster for protocol tests. Speaks the
// newline-delimited JSON protocol on stdin/stdout and can be told to
// misbehave in specific ways.

#include <poll.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

using Json = nlohmann::ordered_json;

namespace {

struct Options {
  std::string name = "fake";
  std::string context_mode = "full";
  std::string table_path;
  double constant = 0.5;
  bool count_utterances = false;
  std::optional<int> protocol;
  bool not_ready = false;
  int crash_at = 0;
  std::string once_file;
  int hang_at = 0;
  int bad_score_at = 0;
  int error_at = 0;
  int unknown_id_at = 0;
  bool duplicate = false;
  bool reverse = false;
  int exit_code = 0;
  std::string transcript;
};

std::ofstream transcript;

void send(const Json& msg) {
  const std::string line = msg.dump();
  if (transcript.is_open()) transcript << "< " << line << '\n' << std::flush;
  std::cout << line << '\n' << std::flush;
}

bool stdin_ready(int timeout_ms) {
  pollfd p{STDIN_FILENO, POLLIN, 0};
  return ::poll(&p, 1, timeout_ms) > 0;
}

// True the first time it is called for `path`; later runs see the marker.
bool first_run(const std::string& path) {
  if (path.empty()) return true;
  if (std::filesystem::exists(path)) return false;
  std::ofstream(path) << "ran\n";
  return true;
}

}  // namespace

int main(int argc, char** argv) {
  Options o;
  CLI::App app{"fake external forecaster"};
  app.add_option("--name", o.name);
  app.add_option("--context-mode", o.context_mode);
  app.add_option("--table", o.table_path, "NDJSON {conversation_id, t, score}");
  app.add_option("--constant", o.constant);
  app.add_flag("--count-utterances", o.count_utterances, "Score = utterances received / 100");
  app.add_option("--protocol", o.protocol, "Protocol number to declare in ready");
  app.add_flag("--not-ready", o.not_ready);
  app.add_option("--crash-at", o.crash_at, "Exit abruptly on the k-th request");
  app.add_option("--once-file", o.once_file, "Misbehave only while this marker file is absent");
  app.add_option("--hang-at", o.hang_at, "Stop answering at the k-th request");
  app.add_option("--bad-score-at", o.bad_score_at);
  app.add_option("--error-at", o.error_at);
  app.add_option("--unknown-id-at", o.unknown_id_at);
  app.add_flag("--duplicate", o.duplicate);
  app.add_flag("--reverse", o.reverse, "Answer buffered requests in reverse order");
  app.add_option("--exit-code", o.exit_code, "Status to exit with after bye");
  app.add_option("--transcript", o.transcript);
  CLI11_PARSE(app, argc, argv);

  std::map<std::pair<std::string, std::int64_t>, double> table;
  if (!o.table_path.empty()) {
    std::ifstream in(o.table_path);
    for (std::string line; std::getline(in, line);) {
      if (line.empty()) continue;
      const Json j = Json::parse(line);
      table[{j.at("conversation_id").get<std::string>(), j.at("t").get<std::int64_t>()}] = j.at("score").get<double>();
    }
  }
  if (!o.transcript.empty()) transcript.open(o.transcript, std::ios::app);
  const bool misbehave = first_run(o.once_file);

  int request_no = 0;
  std::vector<Json> buffered;
  const auto answer = [&](const Json& req) {
    Json resp = Json::object();
    resp["type"] = "score";
    resp["conversation_id"] = req.at("conversation_id");
    resp["t"] = req.at("t");
    double score = o.constant;
    if (o.count_utterances) {
      score = static_cast<double>(req.at("utterances").size()) / 100.0;
    } else if (!o.table_path.empty()) {
      const auto it = table.find({req.at("conversation_id").get<std::string>(), req.at("t").get<std::int64_t>()});
      if (it == table.end()) {
        Json err = Json::object();
        err["type"] = "error";
        err["message"] = "no table entry for " + req.at("conversation_id").get<std::string>();
        send(err);
        return;
      }
      score = it->second;
    }
    resp["score"] = score;
    send(resp);
    if (o.duplicate) send(resp);
  };

  for (std::string line; std::getline(std::cin, line);) {
    if (transcript.is_open()) transcript << "> " << line << '\n' << std::flush;
    const Json msg = Json::parse(line);
    const std::string type = msg.value("type", "");
    if (type == "hello") {
      Json ready = Json::object();
      ready["type"] = o.not_ready ? "welcome" : "ready";
      if (o.protocol) ready["protocol"] = *o.protocol;
      ready["name"] = o.name;
      ready["context_mode"] = o.context_mode;
      send(ready);
    } else if (type == "forecast") {
      ++request_no;
      if (misbehave && request_no == o.crash_at) std::_Exit(3);
      if (misbehave && request_no == o.hang_at) {
        for (;;) std::this_thread::sleep_for(std::chrono::seconds(1));
      }
      if (request_no == o.bad_score_at) {
        Json resp = Json::object();
        resp["type"] = "score";
        resp["conversation_id"] = msg.at("conversation_id");
        resp["t"] = msg.at("t");
        resp["score"] = 1.5;
        send(resp);
        continue;
      }
      if (request_no == o.error_at) {
        Json err = Json::object();
        err["type"] = "error";
        err["message"] = "scorer failed";
        send(err);
        continue;
      }
      if (request_no == o.unknown_id_at) {
        Json resp = Json::object();
        resp["type"] = "score";
        resp["conversation_id"] = "no-such-conversation";
        resp["t"] = 1;
        resp["score"] = 0.5;
        send(resp);
        continue;
      }
      if (o.reverse) {
        buffered.push_back(msg);
        if (stdin_ready(100)) continue;
        for (auto it = buffered.rbegin(); it != buffered.rend(); ++it) answer(*it);
        buffered.clear();
        continue;
      }
      answer(msg);
    } else if (type == "bye") {
      return o.exit_code;
    } else {
      Json err = Json::object();
      err["type"] = "error";
      err["message"] = "unknown message type";
      send(err);
      return 4;
    }
  }
  return o.exit_code;
}
