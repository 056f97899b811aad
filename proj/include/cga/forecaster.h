#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>

#include "cga/corpus.h"

namespace cga {

enum class ContextMode { kFull, kLastOnly };

std::string_view to_string(ContextMode mode);
std::optional<ContextMode> parse_context_mode(std::string_view name);

struct ForecasterDescriptor {
  std::string name;
  ContextMode context_mode = ContextMode::kFull;
};

// Maps conversation(t) to an event probability in [0, 1]. Implementations
// must be deterministic and safe to call concurrently.
class Forecaster {
 public:
  virtual ~Forecaster() = default;
  virtual double score(const PrefixView& prefix) const = 0;
  virtual ForecasterDescriptor descriptor() const = 0;
};

class ConstantForecaster final : public Forecaster {
 public:
  explicit ConstantForecaster(double value);
  double score(const PrefixView&) const override { return value_; }
  ForecasterDescriptor descriptor() const override;

 private:
  double value_;
};

using Lexicon = std::set<std::string, std::less<>>;

// One token per line; blank lines and lines starting with '#' are skipped.
// Entries are normalized through the tokenizer.
Lexicon read_lexicon(std::istream& in);
Lexicon load_lexicon(const std::filesystem::path& path);

enum class LexiconMode { kDensity, kMaxUtterance };

std::optional<LexiconMode> parse_lexicon_mode(std::string_view name);

// Fraction of prefix tokens found in the lexicon (kDensity), or the largest
// such fraction over single utterances (kMaxUtterance). Empty input scores 0.
double lexicon_score(const PrefixView& prefix, const Lexicon& lexicon, LexiconMode mode);

class LexiconForecaster final : public Forecaster {
 public:
  LexiconForecaster(Lexicon lexicon, LexiconMode mode);
  double score(const PrefixView& prefix) const override { return lexicon_score(prefix, lexicon_, mode_); }
  ForecasterDescriptor descriptor() const override;

 private:
  Lexicon lexicon_;
  LexiconMode mode_;
};

// No-context ablation: the wrapped forecaster only ever sees utterance(t).
class LastOnlyForecaster final : public Forecaster {
 public:
  explicit LastOnlyForecaster(std::shared_ptr<const Forecaster> inner);
  double score(const PrefixView& prefix) const override { return inner_->score(prefix.most_recent_only()); }
  ForecasterDescriptor descriptor() const override;

 private:
  std::shared_ptr<const Forecaster> inner_;
};

}  // namespace cga
