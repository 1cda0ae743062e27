#pragma once

#include <stdexcept>
#include <string>

namespace lrnet {

// Coarse classification used by the command line to pick an exit code.
enum class ErrorKind {
  config,   // bad usage, bad config value, unknown key
  data,     // unreadable/missing/mismatched input files or extents
  shape,    // tensor shape contract violated
  numeric,  // non-finite values, divergence, failed gradient check
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) fail(kind, what);
}

}  // namespace lrnet
