#include "cga/corpus.h"

#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <unordered_map>

#include "cga/error.h"

namespace cga {

namespace {

const std::set<std::string, std::less<>> kUtteranceKeys = {"id", "speaker", "text", "timestamp", "removed", "deleted"};
const std::set<std::string, std::less<>> kConversationKeys = {"id", "label", "pair_id", "split", "utterances"};

const Json& require(const Json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end()) throw ValidationError(std::string(what) + " is missing field \"" + key + "\"");
  return *it;
}

std::string require_string(const Json& j, const char* key, const char* what) {
  const Json& v = require(j, key, what);
  if (!v.is_string()) throw ValidationError(std::string(what) + " field \"" + key + "\" must be a string");
  return v.get<std::string>();
}

bool optional_bool(const Json& j, const char* key, const char* what) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return false;
  if (!it->is_boolean()) throw ValidationError(std::string(what) + " field \"" + key + "\" must be a boolean");
  return it->get<bool>();
}

Json collect_extra(const Json& j, const std::set<std::string, std::less<>>& known) {
  Json extra = Json::object();
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!known.contains(it.key())) extra[it.key()] = it.value();
  }
  return extra;
}

}  // namespace

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "?";
}

std::optional<Split> parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val" || name == "dev") return Split::kVal;
  if (name == "test") return Split::kTest;
  return std::nullopt;
}

bool operator==(const Utterance& a, const Utterance& b) {
  return a.id == b.id && a.speaker == b.speaker && a.text == b.text && a.timestamp == b.timestamp &&
         a.removed_by_moderator == b.removed_by_moderator && a.deleted == b.deleted && a.extra == b.extra;
}

bool operator==(const Conversation& a, const Conversation& b) {
  return a.id == b.id && a.label == b.label && a.pair_id == b.pair_id && a.split == b.split &&
         a.utterances == b.utterances && a.extra == b.extra;
}

bool operator==(const CorpusMetadata& a, const CorpusMetadata& b) {
  return a.name == b.name && a.version == b.version && a.constructed == b.constructed && a.params == b.params;
}

void validate_conversation(const Conversation& conv) {
  const std::string where = "conversation \"" + conv.id + "\": ";
  if (conv.id.empty()) throw ValidationError("conversation with empty id");
  if (conv.utterances.size() < 2) {
    throw ValidationError(where + "needs at least 2 utterances, has " + std::to_string(conv.utterances.size()));
  }
  std::set<std::string_view> ids;
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    const Utterance& u = conv.utterances[i];
    if (u.id.empty()) throw ValidationError(where + "utterance " + std::to_string(i + 1) + " has empty id");
    if (!ids.insert(u.id).second) throw ValidationError(where + "duplicate utterance id \"" + u.id + "\"");
    if (u.text.empty() && !u.deleted) throw ValidationError(where + "utterance \"" + u.id + "\" has empty text");
    if (i > 0 && u.timestamp <= conv.utterances[i - 1].timestamp) {
      throw ValidationError(where + "timestamps not strictly increasing at utterance \"" + u.id + "\"");
    }
  }
  const std::size_t last = conv.utterances.size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    if (conv.utterances[i].removed_by_moderator) {
      throw ValidationError(where + "moderator removal before the final utterance (\"" + conv.utterances[i].id + "\")");
    }
  }
  const bool final_removed = conv.utterances[last].removed_by_moderator;
  if (conv.derails() && !final_removed) {
    throw ValidationError(where + "label 1 but the final utterance is not moderator-removed");
  }
  if (!conv.derails() && final_removed) {
    throw ValidationError(where + "label 0 but the final utterance is moderator-removed");
  }
}

Corpus::Corpus(std::vector<Conversation> conversations, CorpusMetadata metadata)
    : conversations_(std::move(conversations)), metadata_(std::move(metadata)) {
  struct PairSeen {
    std::vector<std::size_t> members;
  };
  std::map<std::string, PairSeen, std::less<>> pairs;
  for (std::size_t i = 0; i < conversations_.size(); ++i) {
    const Conversation& conv = conversations_[i];
    validate_conversation(conv);
    if (!index_.emplace(conv.id, i).second) throw ValidationError("duplicate conversation id \"" + conv.id + "\"");
    if (metadata_.constructed) {
      for (const Utterance& u : conv.utterances) {
        if (u.deleted) {
          throw ValidationError("conversation \"" + conv.id + "\": constructed corpus contains deleted utterance \"" +
                                u.id + "\"");
        }
      }
    }
    if (conv.pair_id) pairs[*conv.pair_id].members.push_back(i);
  }
  for (const auto& [pair_id, seen] : pairs) {
    if (seen.members.size() != 2) {
      throw PairingError("pair \"" + pair_id + "\" links " + std::to_string(seen.members.size()) +
                         " conversation(s), expected 2 (first: \"" + conversations_[seen.members[0]].id + "\")");
    }
    const Conversation& a = conversations_[seen.members[0]];
    const Conversation& b = conversations_[seen.members[1]];
    if (a.label == b.label) {
      throw PairingError("pair \"" + pair_id + "\": \"" + a.id + "\" and \"" + b.id + "\" have the same label");
    }
    if (a.split != b.split) {
      throw PairingError("pair \"" + pair_id + "\": \"" + a.id + "\" and \"" + b.id + "\" are in different splits");
    }
  }
}

const Conversation* Corpus::find(std::string_view id) const {
  auto it = index_.find(id);
  return it == index_.end() ? nullptr : &conversations_[it->second];
}

const Conversation& Corpus::at(std::string_view id) const {
  const Conversation* conv = find(id);
  if (conv == nullptr) throw ValidationError("unknown conversation \"" + std::string(id) + "\"");
  return *conv;
}

std::vector<const Conversation*> Corpus::in_split(Split split) const {
  std::vector<const Conversation*> out;
  for (const Conversation& conv : conversations_) {
    if (conv.split == split) out.push_back(&conv);
  }
  return out;
}

Json to_json(const Utterance& utt) {
  Json j = Json::object();
  j["id"] = utt.id;
  j["speaker"] = utt.speaker;
  j["text"] = utt.text;
  j["timestamp"] = utt.timestamp;
  j["removed"] = utt.removed_by_moderator;
  j["deleted"] = utt.deleted;
  for (auto it = utt.extra.begin(); it != utt.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

Json to_json(const Conversation& conv) {
  Json j = Json::object();
  j["id"] = conv.id;
  j["label"] = as_int(conv.label);
  j["pair_id"] = conv.pair_id ? Json(*conv.pair_id) : Json(nullptr);
  j["split"] = conv.split ? Json(std::string(to_string(*conv.split))) : Json(nullptr);
  Json utts = Json::array();
  for (const Utterance& u : conv.utterances) utts.push_back(to_json(u));
  j["utterances"] = std::move(utts);
  for (auto it = conv.extra.begin(); it != conv.extra.end(); ++it) j[it.key()] = it.value();
  return j;
}

Json to_json(const CorpusMetadata& meta) {
  Json j = Json::object();
  j["name"] = meta.name;
  j["version"] = meta.version;
  j["constructed"] = meta.constructed;
  j["params"] = meta.params;
  return j;
}

Utterance utterance_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("utterance must be a JSON object");
  Utterance u;
  u.id = require_string(j, "id", "utterance");
  u.speaker = require_string(j, "speaker", "utterance");
  u.text = require_string(j, "text", "utterance");
  const Json& ts = require(j, "timestamp", "utterance");
  if (!ts.is_number_integer()) throw ValidationError("utterance \"" + u.id + "\": timestamp must be an integer");
  u.timestamp = ts.get<std::int64_t>();
  u.removed_by_moderator = optional_bool(j, "removed", "utterance");
  u.deleted = optional_bool(j, "deleted", "utterance");
  u.extra = collect_extra(j, kUtteranceKeys);
  return u;
}

Conversation conversation_from_json(const Json& j) {
  if (!j.is_object()) throw ValidationError("conversation must be a JSON object");
  Conversation c;
  c.id = require_string(j, "id", "conversation");
  const Json& label = require(j, "label", "conversation");
  if (!label.is_number_integer() || (label.get<std::int64_t>() != 0 && label.get<std::int64_t>() != 1)) {
    throw ValidationError("conversation \"" + c.id + "\": label must be 0 or 1");
  }
  c.label = label.get<int>() == 1 ? Label::kDerailing : Label::kCivil;
  if (auto it = j.find("pair_id"); it != j.end() && !it->is_null()) {
    if (!it->is_string()) throw ValidationError("conversation \"" + c.id + "\": pair_id must be a string or null");
    c.pair_id = it->get<std::string>();
  }
  if (auto it = j.find("split"); it != j.end() && !it->is_null()) {
    std::optional<Split> split = it->is_string() ? parse_split(it->get<std::string>()) : std::nullopt;
    if (!split || it->get<std::string>() == "dev") {
      throw ValidationError("conversation \"" + c.id + "\": split must be train, val, test or null");
    }
    c.split = split;
  }
  const Json& utts = require(j, "utterances", "conversation");
  if (!utts.is_array()) throw ValidationError("conversation \"" + c.id + "\": utterances must be an array");
  for (const Json& u : utts) c.utterances.push_back(utterance_from_json(u));
  c.extra = collect_extra(j, kConversationKeys);
  return c;
}

Corpus read_corpus(std::istream& in, const std::string& source) {
  std::vector<Conversation> conversations;
  CorpusMetadata meta;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    Json j;
    try {
      j = Json::parse(line);
    } catch (const Json::parse_error& e) {
      throw ParseError(source, line_no, std::string("malformed JSON: ") + e.what());
    }
    if (j.is_object() && j.contains("corpus") && !j.contains("id")) {
      if (!conversations.empty()) throw ParseError(source, line_no, "corpus metadata must precede conversations");
      const Json& m = j["corpus"];
      if (!m.is_object()) throw ParseError(source, line_no, "corpus metadata must be an object");
      meta.name = m.value("name", std::string());
      meta.version = m.value("version", std::string());
      meta.constructed = m.value("constructed", false);
      meta.params = m.value("params", Json::object());
      continue;
    }
    try {
      conversations.push_back(conversation_from_json(j));
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const Json::exception& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return Corpus(std::move(conversations), std::move(meta));
}

Corpus load_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus file " + path.string());
  return read_corpus(in, path.string());
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  const CorpusMetadata& meta = corpus.metadata();
  if (meta != CorpusMetadata{}) {
    Json header = Json::object();
    header["corpus"] = to_json(meta);
    out << header.dump() << '\n';
  }
  for (const Conversation& conv : corpus.conversations()) out << to_json(conv).dump() << '\n';
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write corpus file " + path.string());
  write_corpus(corpus, out);
}

PrefixView prefix(const Conversation& conv, std::size_t t) {
  if (t == conv.size()) {
    throw LeakageError("conversation \"" + conv.id + "\": t = N_c = " + std::to_string(t) +
                       " would expose the label-bearing utterance");
  }
  if (t < 1 || t > conv.forecastable()) {
    throw ValidationError("conversation \"" + conv.id + "\": t = " + std::to_string(t) + " outside [1, " +
                          std::to_string(conv.forecastable()) + "]");
  }
  return PrefixView(conv.id, t, std::span<const Utterance>(conv.utterances).first(t));
}

void validate_ratios(const SplitRatios& r) {
  if (r.train < 0 || r.val < 0 || r.test < 0 || std::fabs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw ValidationError("split ratios must be non-negative and sum to 1");
  }
}

SplitCounts split_counts(std::size_t n_pairs, const SplitRatios& ratios) {
  validate_ratios(ratios);
  // Val and test round to nearest; train takes whatever is left, so every
  // split lands within one pair of its exact share.
  const auto share = [n_pairs](double ratio) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(n_pairs) * ratio + 0.5));
  };
  SplitCounts counts;
  counts.val = share(ratios.val);
  counts.test = share(ratios.test);
  if (counts.val > n_pairs) counts.val = n_pairs;
  if (counts.val + counts.test > n_pairs) counts.test = n_pairs - counts.val;
  counts.train = n_pairs - counts.val - counts.test;
  return counts;
}

}  // namespace cga
