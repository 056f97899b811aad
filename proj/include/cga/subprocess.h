#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <sys/types.h>
#include <vector>

namespace cga {

// A child process connected through its stdin/stdout with line-oriented I/O.
// Stderr is inherited. Not thread-safe; each instance has a single owner.
class Subprocess {
 public:
  explicit Subprocess(const std::vector<std::string>& argv);
  ~Subprocess();

  Subprocess(const Subprocess&) = delete;
  Subprocess& operator=(const Subprocess&) = delete;

  // Throws ProtocolError if the child has closed its stdin.
  void write_line(const std::string& line);

  // Next line without the trailing newline. nullopt on timeout; throws
  // ProtocolError on end of stream (the child exited or closed stdout).
  std::optional<std::string> read_line(std::chrono::milliseconds timeout);

  void close_stdin();

  // Exit status, or nullopt if the child is still running after `timeout`.
  // A child killed by a signal reports 128 + signal number.
  std::optional<int> wait(std::chrono::milliseconds timeout);

  void kill();
  pid_t pid() const { return pid_; }

 private:
  pid_t pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
  std::optional<int> exit_status_;
};

}  // namespace cga
