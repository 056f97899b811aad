#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "cga/corpus.h"

namespace cga {

// One top-level post and its root-to-leaf reply paths.
struct RawThread {
  std::string post_id;
  std::vector<std::vector<Utterance>> branches;
};

struct BuildConfig {
  std::size_t min_length = 2;
  std::size_t length_tolerance = 0;  // max |len(derailing) - len(civil)|
  SplitRatios ratios;
  std::uint64_t seed = 0;
};

Json to_json(const BuildConfig& cfg);

struct Candidates {
  std::vector<Conversation> derailing;
  std::vector<Conversation> civil;
};

struct ConversationPair {
  std::string pair_id;
  std::string post_id;
  Conversation derailing;
  Conversation civil;
};

struct PairedCorpus {
  std::vector<ConversationPair> pairs;
};

// Derailing candidates are branches cut at their first moderator-removed
// comment; civil candidates are branches with no removal at all. Candidate ids
// are "<post_id>/<final utterance id>", so branches sharing the same path
// collapse into one candidate. Output is sorted by id.
Candidates extract_candidates(const RawThread& thread, const BuildConfig& cfg);

// Drops every conversation containing a user- or platform-deleted utterance.
std::vector<Conversation> filter_deleted(std::vector<Conversation> candidates);

// Greedy matching in derailing-id order: each derailing conversation takes the
// unused civil conversation from the same post with the smallest length
// difference (within tolerance), ties broken by civil id.
PairedCorpus pair_and_balance(std::vector<Conversation> derailing, std::vector<Conversation> civil,
                              const BuildConfig& cfg);

// Shuffles pairs by seed and partitions them by pair count.
Corpus assign_splits(const PairedCorpus& paired, const BuildConfig& cfg);
// Re-splits an already paired corpus. Throws PairingError on any unpaired
// conversation.
Corpus assign_splits(const Corpus& corpus, const BuildConfig& cfg);

Corpus build_corpus(const std::vector<RawThread>& threads, const BuildConfig& cfg);

std::vector<RawThread> read_raw_threads(std::istream& in, const std::string& source = "<stream>");
std::vector<RawThread> load_raw_threads(const std::filesystem::path& path);
void write_raw_threads(const std::vector<RawThread>& threads, std::ostream& out);

}  // namespace cga
