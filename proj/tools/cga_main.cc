// cga: build corpora, collect forecasts, tune thresholds and evaluate
// conversational forecasters.
//
// Exit codes: 0 success, 1 validation error, 2 runtime or protocol error.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cga/builder.h"
#include "cga/error.h"
#include "cga/pipeline.h"

namespace fs = std::filesystem;
using namespace cga;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ValidationError("bad seed \"" + item + "\"");
    }
  }
  if (seeds.empty()) throw ValidationError("--seed needs at least one integer");
  return seeds;
}

Split require_split(const std::string& name) {
  const auto s = parse_split(name);
  if (!s) throw ValidationError("unknown split \"" + name + "\"");
  return *s;
}

// "constant[:v]", "lexicon[:path]", "bow[:model.json]", "external:<command>"
// or an inline JSON object.
ForecasterSpec parse_forecaster(const std::string& text) {
  ForecasterSpec spec;
  if (!text.empty() && text.front() == '{') {
    Json j = Json::parse(text);
    spec.type = j.at("type").get<std::string>();
    j.erase("type");
    spec.params = j;
    return spec;
  }
  const auto colon = text.find(':');
  spec.type = text.substr(0, colon);
  const std::string arg = colon == std::string::npos ? std::string() : text.substr(colon + 1);
  if (spec.type == "constant") {
    if (!arg.empty()) spec.params["value"] = std::stod(arg);
  } else if (spec.type == "lexicon") {
    if (!arg.empty()) spec.params["path"] = arg;
  } else if (spec.type == "bow") {
    if (!arg.empty()) spec.params["model"] = arg;
  } else if (spec.type == "external") {
    if (arg.empty()) throw ValidationError("external forecaster needs a command: external:<command>");
    spec.params["command"] = arg;
  } else {
    throw ValidationError("unknown forecaster \"" + text + "\"");
  }
  return spec;
}

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw Error("cannot write " + out_path);
  out << text;
}

AggregateReport load_any_report(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  Json j;
  try {
    j = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  if (j.contains("runs")) return aggregate_report_from_json(j);
  return aggregate({eval_report_from_json(j)});
}

void print_result(const PipelineResult& result, const std::string& format, bool ablation) {
  if (format == "json") {
    Json j = Json::object();
    j["full"] = to_json(result.full);
    if (result.last_only) j["last_only"] = to_json(*result.last_only);
    std::cout << j.dump(2) << '\n';
    return;
  }
  if (ablation && result.last_only) {
    std::cout << render_ablation(result.full, *result.last_only);
    return;
  }
  std::vector<AggregateReport> rows = {result.full};
  if (result.last_only) rows.push_back(*result.last_only);
  std::cout << render_table(rows);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conversational forecasting evaluation"};
  app.require_subcommand(1);

  std::string config_path;
  std::string seed_text;
  std::string out_path;
  std::string format = "text";
  const auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "Run config (JSON)");
    cmd->add_option("--seed", seed_text, "Seed, or comma-separated seeds");
    cmd->add_option("--out", out_path, "Output file or directory");
    cmd->add_option("--format", format, "text or json")->check(CLI::IsMember({"text", "json"}));
  };

  auto* generate = app.add_subcommand("generate", "Generate a synthetic paired corpus");
  add_common(generate);
  std::size_t n_pairs = 200;
  int min_len = LengthRange{}.min;
  int max_len = LengthRange{}.max;
  generate->add_option("--pairs", n_pairs, "Number of (derailing, civil) pairs");
  generate->add_option("--min-length", min_len, "Shortest conversation");
  generate->add_option("--max-length", max_len, "Longest conversation");

  auto* build = app.add_subcommand("build", "Build a paired, split corpus from raw threads");
  add_common(build);
  std::string input_path;
  std::size_t build_min_length = BuildConfig{}.min_length;
  std::size_t tolerance = 0;
  std::string ratios_text = "0.6,0.2,0.2";
  build->add_option("--input", input_path, "Raw thread file (JSONL)")->required();
  build->add_option("--min-length", build_min_length, "Minimum conversation length");
  build->add_option("--length-tolerance", tolerance, "Maximum pairwise length difference");
  build->add_option("--ratios", ratios_text, "train,val,test fractions");

  auto* forecast = app.add_subcommand("forecast", "Collect per-utterance forecasts for one split");
  add_common(forecast);
  std::string corpus_path;
  std::string forecaster_text;
  std::string split_name = "test";
  bool last_only = false;
  forecast->add_option("--corpus", corpus_path, "Corpus file (overrides the config)");
  forecast->add_option("--forecaster", forecaster_text, "constant[:v] | lexicon[:path] | bow[:model] | external:<cmd>");
  forecast->add_option("--split", split_name, "train, val or test");
  forecast->add_flag("--last-only", last_only, "Show the forecaster only the most recent utterance");

  auto* tune = app.add_subcommand("tune", "Tune a trigger threshold on dev traces");
  add_common(tune);
  std::string traces_path;
  std::string tune_split = "val";
  tune->add_option("--corpus", corpus_path, "Corpus file")->required();
  tune->add_option("--traces", traces_path, "Dev trace file")->required();
  tune->add_option("--split", tune_split, "Split the traces belong to");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Evaluate traces at a threshold");
  add_common(evaluate_cmd);
  std::string threshold_path;
  std::string eval_split = "test";
  evaluate_cmd->add_option("--corpus", corpus_path, "Corpus file")->required();
  evaluate_cmd->add_option("--traces", traces_path, "Trace file")->required();
  evaluate_cmd->add_option("--threshold", threshold_path, "Threshold file from `tune`")->required();
  evaluate_cmd->add_option("--split", eval_split, "Split to evaluate");

  auto* run = app.add_subcommand("run", "Run the full pipeline from a config");
  add_common(run);
  auto* ablate = app.add_subcommand("ablate", "Run full-context and last-only variants");
  add_common(ablate);

  auto* report = app.add_subcommand("report", "Render persisted reports as a table");
  add_common(report);
  std::vector<std::string> report_files;
  report->add_option("files", report_files, "aggregate.json or report.json files")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*generate) {
      const std::uint64_t seed = seed_text.empty() ? 1 : parse_seed_list(seed_text).front();
      const Corpus corpus = generate_synthetic(seed, n_pairs, LengthRange{min_len, max_len});
      std::ostringstream os;
      write_corpus(corpus, os);
      emit(os.str(), out_path);
    } else if (*build) {
      BuildConfig cfg;
      cfg.min_length = build_min_length;
      cfg.length_tolerance = tolerance;
      cfg.seed = seed_text.empty() ? 0 : parse_seed_list(seed_text).front();
      std::vector<double> r;
      std::stringstream ss(ratios_text);
      for (std::string item; std::getline(ss, item, ',');) r.push_back(std::stod(item));
      if (r.size() != 3) throw ValidationError("--ratios needs three fractions");
      cfg.ratios = {r[0], r[1], r[2]};
      const Corpus corpus = build_corpus(load_raw_threads(input_path), cfg);
      std::ostringstream os;
      write_corpus(corpus, os);
      emit(os.str(), out_path);
    } else if (*forecast) {
      RunConfig cfg;
      if (!config_path.empty()) cfg = load_run_config(config_path);
      if (!corpus_path.empty()) cfg.corpus = CorpusSource{corpus_path, std::nullopt};
      if (!forecaster_text.empty()) cfg.forecaster = parse_forecaster(forecaster_text);
      if (cfg.forecaster.type.empty()) throw ValidationError("forecast needs --forecaster or --config");
      if (cfg.corpus.path.empty() && !cfg.corpus.synthetic) throw ValidationError("forecast needs --corpus or --config");
      const std::uint64_t seed = seed_text.empty() ? cfg.seeds.front() : parse_seed_list(seed_text).front();
      const Corpus corpus = resolve_corpus(cfg.corpus);
      const PreparedForecaster prepared = prepare_forecaster(cfg.forecaster, corpus, cfg.train_split, seed);
      const TraceSet traces = forecast_split(cfg.forecaster, prepared, corpus, require_split(split_name),
                                             last_only ? ContextMode::kLastOnly : ContextMode::kFull, seed);
      std::ostringstream os;
      write_trace_file(traces, os);
      emit(os.str(), out_path);
    } else if (*tune) {
      const Corpus corpus = load_corpus(corpus_path);
      const Split split = require_split(tune_split);
      const Threshold t = tune_threshold(load_trace_file(traces_path, &corpus), corpus, split);
      emit(to_json(t).dump(2) + "\n", out_path);
    } else if (*evaluate_cmd) {
      const Corpus corpus = load_corpus(corpus_path);
      const EvalReport r = evaluate(load_trace_file(traces_path, &corpus), corpus, require_split(eval_split),
                                    load_threshold(threshold_path));
      if (format == "json" || !out_path.empty()) {
        emit(to_json(r).dump(2) + "\n", out_path);
      } else {
        const AggregateReport agg = aggregate({r});
        std::cout << render_table(std::span<const AggregateReport>(&agg, 1));
      }
    } else if (*run || *ablate) {
      if (config_path.empty()) throw ValidationError("--config is required");
      const auto seeds = seed_text.empty() ? std::vector<std::uint64_t>{} : parse_seed_list(seed_text);
      RunConfig cfg = load_run_config(config_path);
      if (!seeds.empty()) cfg.seeds = seeds;
      if (!out_path.empty()) cfg.output_dir = out_path;
      const PipelineResult result = *ablate ? run_ablation(cfg) : run_pipeline(cfg);
      print_result(result, format, ablate->parsed());
    } else if (*report) {
      std::vector<AggregateReport> reports;
      for (const std::string& f : report_files) reports.push_back(load_any_report(f));
      if (format == "json") {
        Json j = Json::array();
        for (const AggregateReport& r : reports) j.push_back(to_json(r));
        emit(j.dump(2) + "\n", out_path);
      } else {
        emit(render_table(reports), out_path);
      }
    }
  } catch (const ValidationError& e) {
    std::cerr << "cga: validation error: " << e.what() << '\n';
    return 1;
  } catch (const Json::exception& e) {
    std::cerr << "cga: validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "cga: validation error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "cga: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
