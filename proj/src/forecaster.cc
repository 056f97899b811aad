#include "cga/forecaster.h"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <istream>

#include "cga/error.h"
#include "cga/tokenize.h"

namespace cga {

std::string_view to_string(ContextMode mode) { return mode == ContextMode::kFull ? "full" : "last_only"; }

std::optional<ContextMode> parse_context_mode(std::string_view name) {
  if (name == "full") return ContextMode::kFull;
  if (name == "last_only") return ContextMode::kLastOnly;
  return std::nullopt;
}

ConstantForecaster::ConstantForecaster(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) throw ValidationError("constant score must lie in [0, 1]");
}

ForecasterDescriptor ConstantForecaster::descriptor() const {
  char buf[64];
  std::snprintf(buf, sizeof buf, "constant(%g)", value_);
  return {buf, ContextMode::kFull};
}

Lexicon read_lexicon(std::istream& in) {
  Lexicon lexicon;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    for (std::string& token : tokenize(line)) lexicon.insert(std::move(token));
  }
  return lexicon;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open lexicon file " + path.string());
  return read_lexicon(in);
}

std::optional<LexiconMode> parse_lexicon_mode(std::string_view name) {
  if (name == "density") return LexiconMode::kDensity;
  if (name == "max_utterance") return LexiconMode::kMaxUtterance;
  return std::nullopt;
}

double lexicon_score(const PrefixView& prefix, const Lexicon& lexicon, LexiconMode mode) {
  std::size_t hits = 0;
  std::size_t total = 0;
  double best = 0.0;
  for (const Utterance& u : prefix.utterances()) {
    const std::vector<std::string> tokens = tokenize(u.text);
    const auto utt_hits = static_cast<std::size_t>(
        std::count_if(tokens.begin(), tokens.end(), [&](const std::string& t) { return lexicon.contains(t); }));
    hits += utt_hits;
    total += tokens.size();
    if (!tokens.empty()) {
      best = std::max(best, static_cast<double>(utt_hits) / static_cast<double>(tokens.size()));
    }
  }
  const double score =
      mode == LexiconMode::kDensity ? (total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total))
                                    : best;
  return std::clamp(score, 0.0, 1.0);
}

LexiconForecaster::LexiconForecaster(Lexicon lexicon, LexiconMode mode) : lexicon_(std::move(lexicon)), mode_(mode) {
  if (lexicon_.empty()) throw ValidationError("lexicon must not be empty");
}

ForecasterDescriptor LexiconForecaster::descriptor() const {
  return {mode_ == LexiconMode::kDensity ? "lexicon(density)" : "lexicon(max_utterance)", ContextMode::kFull};
}

LastOnlyForecaster::LastOnlyForecaster(std::shared_ptr<const Forecaster> inner) : inner_(std::move(inner)) {
  if (!inner_) throw Error("LastOnlyForecaster needs a forecaster to wrap");
}

ForecasterDescriptor LastOnlyForecaster::descriptor() const {
  return {inner_->descriptor().name, ContextMode::kLastOnly};
}

}  // namespace cga
