#include "cga/builder.h"

#include <algorithm>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <set>

#include "cga/error.h"
#include "cga/random.h"

namespace cga {

namespace {

std::string post_of(const Conversation& conv) {
  auto it = conv.extra.find("post_id");
  return it != conv.extra.end() && it->is_string() ? it->get<std::string>() : std::string();
}

Conversation make_candidate(const RawThread& thread, const std::vector<Utterance>& branch, std::size_t length,
                            Label label) {
  Conversation c;
  c.utterances.assign(branch.begin(), branch.begin() + static_cast<std::ptrdiff_t>(length));
  c.id = thread.post_id + "/" + c.utterances.back().id;
  c.label = label;
  c.extra["post_id"] = thread.post_id;
  return c;
}

void sort_unique(std::vector<Conversation>& convs) {
  std::stable_sort(convs.begin(), convs.end(),
                   [](const Conversation& a, const Conversation& b) { return a.id < b.id; });
  convs.erase(std::unique(convs.begin(), convs.end(),
                          [](const Conversation& a, const Conversation& b) { return a.id == b.id; }),
              convs.end());
}

CorpusMetadata build_metadata(const BuildConfig& cfg) {
  CorpusMetadata meta;
  meta.name = "built";
  meta.version = "1";
  meta.constructed = true;
  meta.params = to_json(cfg);
  return meta;
}

std::vector<Split> split_sequence(std::size_t n_pairs, const BuildConfig& cfg) {
  const SplitCounts counts = split_counts(n_pairs, cfg.ratios);
  std::vector<std::size_t> order(n_pairs);
  for (std::size_t i = 0; i < n_pairs; ++i) order[i] = i;
  Rng rng(cfg.seed);
  rng.shuffle(order);
  std::vector<Split> splits(n_pairs);
  for (std::size_t rank = 0; rank < n_pairs; ++rank) {
    splits[order[rank]] = rank < counts.train               ? Split::kTrain
                          : rank < counts.train + counts.val ? Split::kVal
                                                             : Split::kTest;
  }
  return splits;
}

}  // namespace

Json to_json(const BuildConfig& cfg) {
  Json j = Json::object();
  j["min_length"] = cfg.min_length;
  j["length_tolerance"] = cfg.length_tolerance;
  j["split_ratios"] = Json::array({cfg.ratios.train, cfg.ratios.val, cfg.ratios.test});
  j["seed"] = cfg.seed;
  return j;
}

Candidates extract_candidates(const RawThread& thread, const BuildConfig& cfg) {
  Candidates out;
  for (const auto& branch : thread.branches) {
    auto removed = std::find_if(branch.begin(), branch.end(),
                                [](const Utterance& u) { return u.removed_by_moderator; });
    if (removed != branch.end()) {
      const auto length = static_cast<std::size_t>(removed - branch.begin()) + 1;
      if (length >= cfg.min_length && length >= 2) {
        out.derailing.push_back(make_candidate(thread, branch, length, Label::kDerailing));
      }
    } else if (branch.size() >= cfg.min_length && branch.size() >= 2) {
      out.civil.push_back(make_candidate(thread, branch, branch.size(), Label::kCivil));
    }
  }
  sort_unique(out.derailing);
  sort_unique(out.civil);
  return out;
}

std::vector<Conversation> filter_deleted(std::vector<Conversation> candidates) {
  std::erase_if(candidates, [](const Conversation& c) {
    return std::any_of(c.utterances.begin(), c.utterances.end(), [](const Utterance& u) { return u.deleted; });
  });
  return candidates;
}

PairedCorpus pair_and_balance(std::vector<Conversation> derailing, std::vector<Conversation> civil,
                              const BuildConfig& cfg) {
  sort_unique(derailing);
  sort_unique(civil);
  std::map<std::string, std::vector<std::size_t>> civil_by_post;
  for (std::size_t i = 0; i < civil.size(); ++i) civil_by_post[post_of(civil[i])].push_back(i);
  std::vector<bool> used(civil.size(), false);

  PairedCorpus paired;
  for (Conversation& d : derailing) {
    const std::string post = post_of(d);
    auto group = civil_by_post.find(post);
    if (group == civil_by_post.end()) continue;
    std::size_t best = civil.size();
    std::size_t best_diff = 0;
    for (std::size_t idx : group->second) {
      if (used[idx]) continue;
      const std::size_t a = d.size();
      const std::size_t b = civil[idx].size();
      const std::size_t diff = a > b ? a - b : b - a;
      if (diff > cfg.length_tolerance) continue;
      // Candidates within a group are already in id order, so strict < keeps
      // the lexicographically smallest id among equal differences.
      if (best == civil.size() || diff < best_diff) {
        best = idx;
        best_diff = diff;
      }
    }
    if (best == civil.size()) continue;
    used[best] = true;
    ConversationPair pair;
    pair.pair_id = "pair:" + d.id;
    pair.post_id = post;
    pair.derailing = std::move(d);
    pair.civil = civil[best];
    pair.derailing.pair_id = pair.pair_id;
    pair.civil.pair_id = pair.pair_id;
    paired.pairs.push_back(std::move(pair));
  }
  return paired;
}

Corpus assign_splits(const PairedCorpus& paired, const BuildConfig& cfg) {
  std::vector<const ConversationPair*> pairs;
  for (const ConversationPair& p : paired.pairs) pairs.push_back(&p);
  std::sort(pairs.begin(), pairs.end(),
            [](const ConversationPair* a, const ConversationPair* b) { return a->pair_id < b->pair_id; });
  const std::vector<Split> splits = split_sequence(pairs.size(), cfg);

  std::vector<Conversation> conversations;
  conversations.reserve(2 * pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    Conversation d = pairs[i]->derailing;
    Conversation c = pairs[i]->civil;
    d.pair_id = c.pair_id = pairs[i]->pair_id;
    d.split = c.split = splits[i];
    conversations.push_back(std::move(d));
    conversations.push_back(std::move(c));
  }
  return Corpus(std::move(conversations), build_metadata(cfg));
}

Corpus assign_splits(const Corpus& corpus, const BuildConfig& cfg) {
  std::set<std::string> pair_ids;
  for (const Conversation& conv : corpus.conversations()) {
    if (!conv.pair_id) throw PairingError("conversation \"" + conv.id + "\" is not paired");
    pair_ids.insert(*conv.pair_id);
  }
  const std::vector<std::string> ordered(pair_ids.begin(), pair_ids.end());
  const std::vector<Split> splits = split_sequence(ordered.size(), cfg);
  std::map<std::string, Split> split_of;
  for (std::size_t i = 0; i < ordered.size(); ++i) split_of[ordered[i]] = splits[i];

  std::vector<Conversation> conversations = corpus.conversations();
  for (Conversation& conv : conversations) conv.split = split_of.at(*conv.pair_id);
  CorpusMetadata meta = corpus.metadata();
  meta.params["split_seed"] = cfg.seed;
  return Corpus(std::move(conversations), std::move(meta));
}

Corpus build_corpus(const std::vector<RawThread>& threads, const BuildConfig& cfg) {
  if (cfg.min_length < 2) throw ValidationError("min_length must be at least 2");
  validate_ratios(cfg.ratios);
  std::vector<Conversation> derailing;
  std::vector<Conversation> civil;
  for (const RawThread& thread : threads) {
    Candidates c = extract_candidates(thread, cfg);
    for (Conversation& conv : filter_deleted(std::move(c.derailing))) derailing.push_back(std::move(conv));
    for (Conversation& conv : filter_deleted(std::move(c.civil))) civil.push_back(std::move(conv));
  }
  return assign_splits(pair_and_balance(std::move(derailing), std::move(civil), cfg), cfg);
}

std::vector<RawThread> read_raw_threads(std::istream& in, const std::string& source) {
  std::vector<RawThread> threads;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const Json j = Json::parse(line);
      if (!j.is_object() || !j.contains("post_id") || !j["post_id"].is_string()) {
        throw ValidationError("thread needs a string post_id");
      }
      RawThread thread;
      thread.post_id = j["post_id"].get<std::string>();
      const Json& branches = j.at("branches");
      if (!branches.is_array()) throw ValidationError("branches must be an array");
      for (const Json& b : branches) {
        if (!b.is_array()) throw ValidationError("each branch must be an array of utterances");
        std::vector<Utterance> branch;
        for (const Json& u : b) {
          Utterance utt = utterance_from_json(u);
          if (utt.text.empty() && !utt.deleted) throw ValidationError("utterance \"" + utt.id + "\" has empty text");
          if (!branch.empty() && utt.timestamp <= branch.back().timestamp) {
            throw ValidationError("branch timestamps not strictly increasing at \"" + utt.id + "\"");
          }
          branch.push_back(std::move(utt));
        }
        thread.branches.push_back(std::move(branch));
      }
      threads.push_back(std::move(thread));
    } catch (const Json::exception& e) {
      throw ParseError(source, line_no, e.what());
    } catch (const ParseError&) {
      throw;
    } catch (const ValidationError& e) {
      throw ParseError(source, line_no, e.what());
    }
  }
  return threads;
}

std::vector<RawThread> load_raw_threads(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open raw thread file " + path.string());
  return read_raw_threads(in, path.string());
}

void write_raw_threads(const std::vector<RawThread>& threads, std::ostream& out) {
  for (const RawThread& thread : threads) {
    Json j = Json::object();
    j["post_id"] = thread.post_id;
    Json branches = Json::array();
    for (const auto& branch : thread.branches) {
      Json b = Json::array();
      for (const Utterance& u : branch) b.push_back(to_json(u));
      branches.push_back(std::move(b));
    }
    j["branches"] = std::move(branches);
    out << j.dump() << '\n';
  }
}

}  // namespace cga
