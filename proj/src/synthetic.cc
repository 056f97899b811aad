#include "cga/synthetic.h"

#include <array>
#include <cstdio>
#include <string>
#include <vector>

#include "cga/error.h"
#include "cga/random.h"

namespace cga {

namespace synthetic {
namespace {

constexpr std::array<std::string_view, 16> kHostile = {
    "idiot",   "stupid",  "liar",     "pathetic", "moron",   "clueless", "ridiculous", "garbage",
    "troll",   "ignorant", "dishonest", "absurd",  "shut",    "incompetent", "nonsense", "hypocrite"};

constexpr std::array<std::string_view, 12> kCalm = {"sorry",      "thanks",  "fair",   "appreciate",
                                                    "understand", "agreed",  "apologies", "misunderstood",
                                                    "reasonable", "helpful", "glad",   "respect"};

constexpr std::array<std::string_view, 48> kNeutral = {
    "the",     "article", "source",  "edit",     "page",     "section",  "think",   "point",
    "view",    "policy",  "claim",   "example",  "change",   "question", "answer",  "evidence",
    "data",    "paper",   "study",   "argument", "reason",   "people",   "time",    "history",
    "wording", "context", "version", "revert",   "citation", "sentence", "topic",   "issue",
    "you",     "i",       "we",      "it",       "is",       "was",      "that",    "this",
    "not",     "about",   "because", "maybe",    "should",   "would",    "please",  "here"};

}  // namespace

std::span<const std::string_view> hostile_words() { return kHostile; }
std::span<const std::string_view> calm_words() { return kCalm; }
std::span<const std::string_view> neutral_words() { return kNeutral; }

}  // namespace synthetic

namespace {

constexpr std::array<std::string_view, 12> kSpeakers = {"alder", "birch",  "cedar", "dogwood", "elm",   "fir",
                                                        "ginkgo", "hazel", "ilex",  "juniper", "larch", "maple"};

std::string make_text(Rng& rng, const SignalParams& p, double hostile, double calm) {
  const auto n_tokens = rng.between(p.min_tokens, p.max_tokens);
  std::string text;
  for (std::int64_t i = 0; i < n_tokens; ++i) {
    const double u = rng.unit();
    std::string_view word;
    if (u < hostile) {
      word = synthetic::kHostile[rng.index(synthetic::kHostile.size())];
    } else if (u < hostile + calm) {
      word = synthetic::kCalm[rng.index(synthetic::kCalm.size())];
    } else {
      word = synthetic::kNeutral[rng.index(synthetic::kNeutral.size())];
    }
    if (!text.empty()) text.push_back(' ');
    text.append(word);
  }
  text[0] = static_cast<char>(text[0] >= 'a' && text[0] <= 'z' ? text[0] - 'a' + 'A' : text[0]);
  text.push_back('.');
  return text;
}

std::string padded(std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%05zu", n);
  return buf;
}

Utterance make_utterance(const std::string& conv_id, std::size_t t, std::string speaker, std::string text) {
  Utterance u;
  u.id = conv_id + "-u" + std::to_string(t);
  u.speaker = std::move(speaker);
  u.text = std::move(text);
  u.timestamp = static_cast<std::int64_t>(t);
  return u;
}

Conversation make_derailing(Rng& rng, const SignalParams& p, const std::string& id, std::size_t n) {
  Conversation c;
  c.id = id;
  c.label = Label::kDerailing;
  const std::size_t a = rng.index(kSpeakers.size());
  const std::size_t b = (a + 1 + rng.index(kSpeakers.size() - 1)) % kSpeakers.size();
  for (std::size_t t = 1; t <= n; ++t) {
    const bool escalating = (n - t) % 2 == 0;
    const double level = p.escalation_start + (p.escalation_peak - p.escalation_start) * static_cast<double>(t) /
                                                  static_cast<double>(n);
    const double hostile = escalating ? level : p.responder_share * level;
    Utterance u = make_utterance(id, t, std::string(kSpeakers[escalating ? a : b]),
                                 make_text(rng, p, hostile, p.background_calm));
    u.removed_by_moderator = t == n;
    c.utterances.push_back(std::move(u));
  }
  return c;
}

Conversation make_civil(Rng& rng, const SignalParams& p, const std::string& id, std::size_t n) {
  Conversation c;
  c.id = id;
  c.label = Label::kCivil;
  const std::size_t a = rng.index(kSpeakers.size());
  const std::size_t b = (a + 1 + rng.index(kSpeakers.size() - 1)) % kSpeakers.size();
  const std::size_t spike = 1 + rng.index(n - 2);
  for (std::size_t t = 1; t <= n; ++t) {
    double hostile = p.background_hostility;
    double calm = p.background_calm;
    if (t == spike) {
      hostile = p.spike_density;
    } else if (t > spike) {
      calm = p.calm_density;
    }
    c.utterances.push_back(make_utterance(id, t, std::string(kSpeakers[t % 2 == 1 ? a : b]),
                                          make_text(rng, p, hostile, calm)));
  }
  return c;
}

void validate_signal(const SignalParams& p) {
  const auto is_prob = [](double x) { return x >= 0.0 && x <= 1.0; };
  if (p.min_tokens < 1 || p.max_tokens < p.min_tokens) throw ValidationError("invalid token count range");
  if (!is_prob(p.escalation_start) || !is_prob(p.escalation_peak) || !is_prob(p.responder_share) ||
      !is_prob(p.spike_density) || !is_prob(p.background_hostility) || !is_prob(p.calm_density) ||
      !is_prob(p.background_calm)) {
    throw ValidationError("signal densities must lie in [0, 1]");
  }
  if (p.escalation_peak + p.background_calm > 1.0 || p.spike_density + p.background_calm > 1.0 ||
      p.background_hostility + p.calm_density > 1.0) {
    throw ValidationError("hostile and calm densities of one utterance must sum to at most 1");
  }
}

}  // namespace

Json to_json(const SignalParams& p) {
  Json j = Json::object();
  j["min_tokens"] = p.min_tokens;
  j["max_tokens"] = p.max_tokens;
  j["escalation_start"] = p.escalation_start;
  j["escalation_peak"] = p.escalation_peak;
  j["responder_share"] = p.responder_share;
  j["spike_density"] = p.spike_density;
  j["background_hostility"] = p.background_hostility;
  j["calm_density"] = p.calm_density;
  j["background_calm"] = p.background_calm;
  return j;
}

Corpus generate_synthetic(std::uint64_t seed, std::size_t n_pairs, const LengthRange& lengths,
                          const SignalParams& signal) {
  if (n_pairs < 1) throw ValidationError("n_pairs must be at least 1");
  if (lengths.min < 3 || lengths.max > 40 || lengths.min > lengths.max) {
    throw ValidationError("length range must lie within [3, 40]");
  }
  validate_signal(signal);

  Rng rng(seed);
  const std::string prefix = "syn" + std::to_string(seed) + "-p";
  std::vector<std::pair<Conversation, Conversation>> pairs;
  pairs.reserve(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) {
    const auto n = static_cast<std::size_t>(rng.between(lengths.min, lengths.max));
    const std::string pair_id = prefix + padded(i);
    Conversation derailing = make_derailing(rng, signal, pair_id + "-d", n);
    Conversation civil = make_civil(rng, signal, pair_id + "-c", n);
    derailing.pair_id = pair_id;
    civil.pair_id = pair_id;
    pairs.emplace_back(std::move(derailing), std::move(civil));
  }

  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  Rng split_rng(seed ^ 0x5eed5b1170000000ULL);
  split_rng.shuffle(order);
  const SplitCounts counts = split_counts(n_pairs, SplitRatios{});
  for (std::size_t rank = 0; rank < n_pairs; ++rank) {
    const Split split = rank < counts.train               ? Split::kTrain
                        : rank < counts.train + counts.val ? Split::kVal
                                                           : Split::kTest;
    pairs[order[rank]].first.split = split;
    pairs[order[rank]].second.split = split;
  }

  std::vector<Conversation> conversations;
  conversations.reserve(2 * n_pairs);
  for (auto& [derailing, civil] : pairs) {
    conversations.push_back(std::move(derailing));
    conversations.push_back(std::move(civil));
  }

  CorpusMetadata meta;
  meta.name = "synthetic";
  meta.version = "1";
  meta.constructed = true;
  meta.params = Json::object();
  meta.params["seed"] = seed;
  meta.params["n_pairs"] = n_pairs;
  meta.params["min_length"] = lengths.min;
  meta.params["max_length"] = lengths.max;
  meta.params["signal"] = to_json(signal);
  return Corpus(std::move(conversations), std::move(meta));
}

}  // namespace cga
