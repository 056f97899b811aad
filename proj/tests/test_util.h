#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "cga/corpus.h"

namespace cga::testing {

// Utterance texts are "w<t>" unless given.
inline Conversation make_conversation(const std::string& id, std::size_t n, Label label,
                                      std::vector<std::string> texts = {}) {
  Conversation c;
  c.id = id;
  c.label = label;
  for (std::size_t t = 1; t <= n; ++t) {
    Utterance u;
    u.id = id + "." + std::to_string(t);
    u.speaker = t % 2 == 1 ? "a" : "b";
    u.text = t <= texts.size() ? texts[t - 1] : "w" + std::to_string(t);
    u.timestamp = static_cast<std::int64_t>(t);
    u.removed_by_moderator = label == Label::kDerailing && t == n;
    c.utterances.push_back(std::move(u));
  }
  return c;
}

inline Conversation with_split(Conversation c, Split split, std::optional<std::string> pair_id = std::nullopt) {
  c.split = split;
  c.pair_id = std::move(pair_id);
  return c;
}

// A fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("cga-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace cga::testing
