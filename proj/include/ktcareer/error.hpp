#pragma once

#include <stdexcept>
#include <string>

namespace ktc {

// Failure categories. The numeric values double as CLI exit codes for the
// first three; the rest map to validation failures at the process boundary.
enum class ErrorKind {
  kValidation = 1,
  kNumerical = 2,
  kDependency = 3,
  kIo = 4,
  kUnsupported = 5,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error ValidationError(const std::string& what) { return {ErrorKind::kValidation, what}; }
inline Error NumericalError(const std::string& what) { return {ErrorKind::kNumerical, what}; }
inline Error DependencyError(const std::string& what) { return {ErrorKind::kDependency, what}; }
inline Error IoError(const std::string& what) { return {ErrorKind::kIo, what}; }
inline Error UnsupportedError(const std::string& what) { return {ErrorKind::kUnsupported, what}; }

}  // namespace ktc
