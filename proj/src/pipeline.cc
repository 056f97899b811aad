#include "cga/pipeline.h"

#include <atomic>
#include <exception>
#include <fstream>
#include <functional>
#include <set>
#include <thread>

#include "cga/error.h"

#ifndef CGA_DATA_DIR
#define CGA_DATA_DIR "data"
#endif

namespace cga {

namespace fs = std::filesystem;

namespace {

const std::set<std::string> kConfigKeys = {"corpus", "forecaster", "splits", "seeds", "output_dir", "ablation", "workers"};

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() || base.empty() ? path : base / path;
}

Split split_field(const Json& splits, const char* key, Split fallback) {
  if (!splits.contains(key)) return fallback;
  const auto s = parse_split(splits[key].get<std::string>());
  if (!s) throw ValidationError(std::string("unknown split name for \"") + key + "\"");
  return *s;
}

SignalParams signal_from_json(const Json& j) {
  SignalParams p;
  p.min_tokens = j.value("min_tokens", p.min_tokens);
  p.max_tokens = j.value("max_tokens", p.max_tokens);
  p.escalation_start = j.value("escalation_start", p.escalation_start);
  p.escalation_peak = j.value("escalation_peak", p.escalation_peak);
  p.responder_share = j.value("responder_share", p.responder_share);
  p.spike_density = j.value("spike_density", p.spike_density);
  p.background_hostility = j.value("background_hostility", p.background_hostility);
  p.calm_density = j.value("calm_density", p.calm_density);
  p.background_calm = j.value("background_calm", p.background_calm);
  return p;
}

// Prefixes error messages with the pipeline stage while keeping the error
// category (and therefore the CLI exit code).
template <typename Fn>
auto in_stage(const std::string& stage, Fn&& fn) -> decltype(fn()) {
  const std::string tag = "[" + stage + "] ";
  try {
    return fn();
  } catch (const LeakageError& e) {
    throw LeakageError(tag + e.what());
  } catch (const PairingError& e) {
    throw PairingError(tag + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(tag + e.what());
  } catch (const ProtocolError& e) {
    throw ProtocolError(tag + e.what());
  } catch (const Error& e) {
    throw Error(tag + e.what());
  }
}

std::vector<std::string> command_argv(const Json& command) {
  if (command.is_string()) return {"/bin/sh", "-c", command.get<std::string>()};
  if (command.is_array() && !command.empty()) return command.get<std::vector<std::string>>();
  throw ValidationError("external forecaster needs a non-empty \"command\"");
}

TraceSet restrict_to(const TraceSet& traces, const Corpus& corpus, Split split) {
  TraceSet out = traces;
  out.traces.clear();
  for (const Conversation* conv : corpus.in_split(split)) {
    auto it = traces.traces.find(conv->id);
    if (it == traces.traces.end()) {
      throw ValidationError("trace file has no trace for conversation \"" + conv->id + "\"");
    }
    out.traces.emplace(it->first, it->second);
  }
  return out;
}

struct Variant {
  ContextMode mode;
  fs::path dir;  // <out>/<type>-<mode>
};

EvalReport run_variant(const RunConfig& config, const Corpus& corpus, const PreparedForecaster& prepared,
                       std::uint64_t seed, const Variant& variant) {
  const fs::path final_dir = variant.dir / ("seed-" + std::to_string(seed));
  const fs::path partial = fs::path(final_dir.string() + ".partial");
  fs::remove_all(partial);
  fs::create_directories(partial);
  try {
    if (prepared.model) save_bow(*prepared.model, partial / "model.json");
    const TraceSet dev = in_stage("forecast dev", [&] {
      return forecast_split(config.forecaster, prepared, corpus, config.dev_split, variant.mode, seed);
    });
    save_trace_file(dev, partial / "traces_dev.jsonl");
    const TraceSet test = in_stage("forecast test", [&] {
      return forecast_split(config.forecaster, prepared, corpus, config.test_split, variant.mode, seed);
    });
    save_trace_file(test, partial / "traces_test.jsonl");
    const Threshold threshold = in_stage("tune", [&] { return tune_threshold(dev, corpus, config.dev_split); });
    save_threshold(threshold, partial / "threshold.json");
    EvalReport report = in_stage("evaluate", [&] { return evaluate(test, corpus, config.test_split, threshold); });
    save_eval_report(report, partial / "report.json");
    fs::remove_all(final_dir);
    fs::rename(partial, final_dir);
    return report;
  } catch (...) {
    std::error_code ec;
    fs::remove_all(partial, ec);
    throw;
  }
}

}  // namespace

RunConfig parse_run_config(const Json& j, const fs::path& base_dir) {
  if (!j.is_object()) throw ValidationError("run config must be a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kConfigKeys.contains(it.key())) throw ValidationError("unknown config key \"" + it.key() + "\"");
  }
  RunConfig cfg;
  try {
    const Json& corpus = j.at("corpus");
    if (corpus.is_string()) {
      cfg.corpus.path = resolve(base_dir, corpus.get<std::string>());
    } else if (corpus.is_object() && corpus.contains("synthetic")) {
      const Json& s = corpus["synthetic"];
      SyntheticSpec spec;
      spec.seed = s.value("seed", spec.seed);
      spec.n_pairs = s.value("n_pairs", spec.n_pairs);
      spec.lengths.min = s.value("min_length", spec.lengths.min);
      spec.lengths.max = s.value("max_length", spec.lengths.max);
      if (s.contains("signal")) spec.signal = signal_from_json(s["signal"]);
      cfg.corpus.synthetic = spec;
    } else if (corpus.is_object() && corpus.contains("path")) {
      cfg.corpus.path = resolve(base_dir, corpus["path"].get<std::string>());
    } else {
      throw ValidationError("\"corpus\" must be a path or {\"synthetic\": {...}}");
    }

    const Json& f = j.at("forecaster");
    if (!f.is_object() || !f.contains("type")) throw ValidationError("\"forecaster\" needs a \"type\"");
    cfg.forecaster.type = f["type"].get<std::string>();
    static const std::set<std::string> kTypes = {"constant", "lexicon", "bow", "external", "trace_file"};
    if (!kTypes.contains(cfg.forecaster.type)) {
      throw ValidationError("unknown forecaster type \"" + cfg.forecaster.type + "\"");
    }
    cfg.forecaster.params = f;
    cfg.forecaster.params.erase("type");
    for (const char* key : {"path", "model", "dev", "test", "traces"}) {
      if (cfg.forecaster.params.contains(key) && cfg.forecaster.params[key].is_string()) {
        cfg.forecaster.params[key] = resolve(base_dir, cfg.forecaster.params[key].get<std::string>()).string();
      }
    }

    if (j.contains("splits")) {
      const Json& s = j["splits"];
      cfg.train_split = split_field(s, "train", cfg.train_split);
      cfg.dev_split = split_field(s, "dev", cfg.dev_split);
      cfg.test_split = split_field(s, "test", cfg.test_split);
    }
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("output_dir")) cfg.output_dir = resolve(base_dir, j["output_dir"].get<std::string>());
    cfg.ablation = j.value("ablation", false);
    cfg.workers = j.value("workers", std::size_t{1});
  } catch (const Json::exception& e) {
    throw ValidationError(std::string("invalid run config: ") + e.what());
  }
  if (cfg.seeds.empty()) throw ValidationError("run config needs at least one seed");
  if (cfg.workers == 0) throw ValidationError("workers must be at least 1");
  if (cfg.dev_split == cfg.test_split) throw ValidationError("dev and test splits must differ");
  return cfg;
}

RunConfig load_run_config(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open config " + path.string());
  try {
    return parse_run_config(Json::parse(in), path.parent_path());
  } catch (const Json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

Corpus resolve_corpus(const CorpusSource& source) {
  if (source.synthetic) {
    const SyntheticSpec& s = *source.synthetic;
    return generate_synthetic(s.seed, s.n_pairs, s.lengths, s.signal);
  }
  return load_corpus(source.path);
}

fs::path default_lexicon_path() { return fs::path(CGA_DATA_DIR) / "hostility_lexicon.txt"; }

PreparedForecaster prepare_forecaster(const ForecasterSpec& spec, const Corpus& corpus, Split train_split,
                                      std::uint64_t seed) {
  PreparedForecaster out;
  const Json& p = spec.params;
  if (spec.type == "constant") {
    out.native = std::make_shared<ConstantForecaster>(p.value("value", 0.5));
  } else if (spec.type == "lexicon") {
    const fs::path path = p.contains("path") ? fs::path(p["path"].get<std::string>()) : default_lexicon_path();
    const auto mode = parse_lexicon_mode(p.value("mode", std::string("density")));
    if (!mode) throw ValidationError("lexicon mode must be density or max_utterance");
    out.native = std::make_shared<LexiconForecaster>(load_lexicon(path), *mode);
  } else if (spec.type == "bow") {
    if (p.contains("model")) {
      out.model = std::make_shared<BowModel>(load_bow(p["model"].get<std::string>()));
    } else {
      BowHyper hyper;
      hyper.seed = seed;
      hyper.epochs = p.value("epochs", hyper.epochs);
      hyper.learning_rate = p.value("learning_rate", hyper.learning_rate);
      hyper.max_halvings = p.value("max_halvings", hyper.max_halvings);
      const std::vector<const Conversation*> train = corpus.in_split(train_split);
      out.model = in_stage("fit", [&] { return std::make_shared<BowModel>(fit_bow(train, hyper)); });
    }
    out.native = std::make_shared<BowForecaster>(out.model);
  } else if (spec.type != "external" && spec.type != "trace_file") {
    throw ValidationError("unknown forecaster type \"" + spec.type + "\"");
  }
  return out;
}

TraceSet forecast_split(const ForecasterSpec& spec, const PreparedForecaster& prepared, const Corpus& corpus,
                        Split split, ContextMode mode, std::uint64_t seed) {
  const Json& p = spec.params;
  CollectOptions collect;
  collect.seed = seed;
  collect.workers = p.value("workers", std::size_t{1});
  if (prepared.native) {
    if (mode == ContextMode::kFull) return collect_traces(*prepared.native, corpus, split, collect);
    return collect_traces(LastOnlyForecaster(prepared.native), corpus, split, collect);
  }
  if (spec.type == "external") {
    ExternalOptions ext;
    ext.command = command_argv(p.value("command", Json()));
    ext.timeout = std::chrono::milliseconds(p.value("timeout_ms", std::int64_t{60000}));
    ext.retry_once = p.value("retry_once", false);
    ext.max_in_flight = p.value("max_in_flight", std::size_t{1});
    if (mode == ContextMode::kLastOnly) ext.context_mode = ContextMode::kLastOnly;
    return collect_traces_external(ext, corpus, split, collect);
  }
  if (spec.type == "trace_file") {
    const char* key = split == Split::kTest ? "test" : split == Split::kVal ? "dev" : "train";
    std::string path;
    if (p.contains(key)) {
      path = p[key].get<std::string>();
    } else if (p.contains("traces")) {
      path = p["traces"].get<std::string>();
    } else {
      throw ValidationError(std::string("trace_file forecaster has no \"") + key + "\" or \"traces\" file");
    }
    TraceSet traces = load_trace_file(path, &corpus);
    if (traces.context_mode != mode) {
      throw ValidationError("trace file " + path + " holds " + std::string(to_string(traces.context_mode)) +
                            " traces; precomputed traces cannot be re-wrapped to another context mode");
    }
    return restrict_to(traces, corpus, split);
  }
  throw ValidationError("forecaster type \"" + spec.type + "\" cannot produce traces");
}

PipelineResult run_pipeline(const RunConfig& config) {
  const Corpus corpus = in_stage("load corpus", [&] { return resolve_corpus(config.corpus); });
  fs::create_directories(config.output_dir);
  if (config.corpus.synthetic) save_corpus(corpus, config.output_dir / "corpus.jsonl");

  std::vector<Variant> variants = {{ContextMode::kFull, {}}};
  if (config.ablation) variants.push_back({ContextMode::kLastOnly, {}});
  for (Variant& v : variants) {
    v.dir = config.output_dir / (config.forecaster.type + "-" + std::string(to_string(v.mode)));
  }

  const std::size_t n_seeds = config.seeds.size();
  std::vector<std::vector<EvalReport>> per_seed(n_seeds);
  std::vector<std::exception_ptr> errors(n_seeds);
  std::atomic<std::size_t> next{0};
  const auto work = [&] {
    for (std::size_t i = next++; i < n_seeds; i = next++) {
      try {
        const std::uint64_t seed = config.seeds[i];
        const PreparedForecaster prepared = prepare_forecaster(config.forecaster, corpus, config.train_split, seed);
        for (const Variant& v : variants) per_seed[i].push_back(run_variant(config, corpus, prepared, seed, v));
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const std::size_t n_workers = std::min(config.workers, n_seeds);
  if (n_workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
  }
  for (const std::exception_ptr& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  std::vector<AggregateReport> aggregates;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    std::vector<EvalReport> runs;
    for (std::size_t i = 0; i < n_seeds; ++i) runs.push_back(per_seed[i][v]);
    AggregateReport agg = aggregate(std::move(runs));
    save_aggregate_report(agg, variants[v].dir / "aggregate.json");
    std::ofstream table(variants[v].dir / "table.txt", std::ios::binary);
    table << render_table(std::span<const AggregateReport>(&agg, 1));
    aggregates.push_back(std::move(agg));
  }
  PipelineResult result{aggregates.front(), std::nullopt};
  if (aggregates.size() > 1) result.last_only = aggregates[1];
  return result;
}

PipelineResult run_ablation(const RunConfig& config) {
  if (config.forecaster.type == "trace_file") {
    throw ValidationError("trace_file forecasters cannot be run without context; ablate the producing model instead");
  }
  RunConfig cfg = config;
  cfg.ablation = true;
  PipelineResult result = run_pipeline(cfg);
  std::ofstream out(cfg.output_dir / "ablation.txt", std::ios::binary);
  out << render_ablation(result.full, *result.last_only);
  return result;
}

EvalReport replay_run(const fs::path& run_dir, const Corpus& corpus, Split test_split) {
  const TraceSet test = load_trace_file(run_dir / "traces_test.jsonl", &corpus);
  const Threshold threshold = load_threshold(run_dir / "threshold.json");
  return evaluate(test, corpus, test_split, threshold);
}

}  // namespace cga
