#pragma once

#include <stdexcept>
#include <string>

namespace moodbridge {

enum class ErrorKind {
  Config,
  Data,
  Dimension,
  Numeric,
  Unsupported,
  InvalidArgument,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

// Process exit codes used by the command line tool.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::InvalidArgument:
    case ErrorKind::Unsupported:
      return 2;
    case ErrorKind::Data:
    case ErrorKind::Dimension:
      return 3;
    case ErrorKind::Numeric:
      return 4;
  }
  return 1;
}

}  // namespace moodbridge
