#pragma once

#include <stdexcept>
#include <string>

namespace incepse {

/// Error category, used by the CLI to pick distinct exit codes.
enum class ErrorKind {
  Validation,  // bad arguments, malformed files, shape mismatches
  Runtime,     // numerical failures, I/O failures mid-run
};

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail_validation(const std::string& msg) {
  throw Error(ErrorKind::Validation, msg);
}

[[noreturn]] inline void fail_runtime(const std::string& msg) {
  throw Error(ErrorKind::Runtime, msg);
}

} // namespace incepse
