#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace cga {

using Json = nlohmann::ordered_json;

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
std::optional<Split> parse_split(std::string_view name);

enum class Label : std::uint8_t { kCivil = 0, kDerailing = 1 };

inline int as_int(Label label) { return static_cast<int>(label); }

struct Utterance {
  std::string id;
  std::string speaker;
  std::string text;
  std::int64_t timestamp = 0;  // ordinal position, strictly increasing
  bool removed_by_moderator = false;
  bool deleted = false;
  Json extra = Json::object();  // unknown input fields, kept verbatim

  friend bool operator==(const Utterance& a, const Utterance& b);
};

struct Conversation {
  std::string id;
  std::vector<Utterance> utterances;
  Label label = Label::kCivil;
  std::optional<std::string> pair_id;
  std::optional<Split> split;
  Json extra = Json::object();

  // N_c: the index of the label-bearing utterance.
  std::size_t size() const { return utterances.size(); }
  // Number of timestamps at which a forecast is made (N_c - 1).
  std::size_t forecastable() const { return utterances.empty() ? 0 : utterances.size() - 1; }
  bool derails() const { return label == Label::kDerailing; }

  friend bool operator==(const Conversation& a, const Conversation& b);
};

struct CorpusMetadata {
  std::string name;
  std::string version;
  // Set by the builder. A constructed corpus may not contain deleted utterances.
  bool constructed = false;
  Json params = Json::object();

  friend bool operator==(const CorpusMetadata& a, const CorpusMetadata& b);
};

// Immutable, validated collection of conversations in insertion order.
class Corpus {
 public:
  Corpus() = default;
  // Validates every conversation and corpus-level invariant; throws
  // ValidationError (or PairingError) naming the offending conversation.
  explicit Corpus(std::vector<Conversation> conversations, CorpusMetadata metadata = {});

  const std::vector<Conversation>& conversations() const { return conversations_; }
  const CorpusMetadata& metadata() const { return metadata_; }
  std::size_t size() const { return conversations_.size(); }
  bool empty() const { return conversations_.empty(); }

  const Conversation* find(std::string_view id) const;
  const Conversation& at(std::string_view id) const;

  // Conversations assigned to `split`, in corpus order.
  std::vector<const Conversation*> in_split(Split split) const;

  friend bool operator==(const Corpus& a, const Corpus& b) {
    return a.metadata_ == b.metadata_ && a.conversations_ == b.conversations_;
  }

 private:
  std::vector<Conversation> conversations_;
  std::map<std::string, std::size_t, std::less<>> index_;
  CorpusMetadata metadata_;
};

// Checks the per-conversation invariants. Throws ValidationError.
void validate_conversation(const Conversation& conv);

Json to_json(const Utterance& utt);
Json to_json(const Conversation& conv);
Json to_json(const CorpusMetadata& meta);
Utterance utterance_from_json(const Json& j);
Conversation conversation_from_json(const Json& j);

// Newline-delimited JSON, one conversation per line, optionally preceded by a
// {"corpus": {...}} metadata line.
Corpus read_corpus(std::istream& in, const std::string& source = "<stream>");
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

// conversation(t): the first t utterances of a conversation. Never includes
// the label-bearing final utterance.
class PrefixView {
 public:
  std::string_view conversation_id() const { return conversation_id_; }
  std::size_t t() const { return t_; }
  std::span<const Utterance> utterances() const { return utterances_; }
  const Utterance& most_recent() const { return utterances_.back(); }

  // utterance(t) alone, as seen by a no-context forecaster.
  PrefixView most_recent_only() const { return PrefixView(conversation_id_, t_, utterances_.last(1)); }

 private:
  friend PrefixView prefix(const Conversation& conv, std::size_t t);
  PrefixView(std::string_view id, std::size_t t, std::span<const Utterance> utts)
      : conversation_id_(id), t_(t), utterances_(utts) {}

  std::string_view conversation_id_;
  std::size_t t_;
  std::span<const Utterance> utterances_;
};

// Throws LeakageError for t = N_c and ValidationError for any other t outside
// [1, N_c - 1].
PrefixView prefix(const Conversation& conv, std::size_t t);

struct SplitRatios {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
};

struct SplitCounts {
  std::size_t train = 0;
  std::size_t val = 0;
  std::size_t test = 0;
};

// Pair counts per split: val and test are floored, the remainder goes to train.
SplitCounts split_counts(std::size_t n_pairs, const SplitRatios& ratios);
void validate_ratios(const SplitRatios& ratios);

}  // namespace cga
