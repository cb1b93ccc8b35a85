#pragma once

#include <stdexcept>
#include <string>

namespace rsfuse {

/// Error category, mapped to CLI exit codes (validation -> 1, numerical -> 2).
enum class ErrorKind {
  Validation,
  Numerical,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void throw_validation(const std::string& msg) {
  throw Error(ErrorKind::Validation, msg);
}

[[noreturn]] inline void throw_numerical(const std::string& msg) {
  throw Error(ErrorKind::Numerical, msg);
}

}  // namespace rsfuse
