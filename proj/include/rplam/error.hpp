#pragma once

#include <stdexcept>
#include <string>

namespace rplam {

/// Machine-readable failure category, also used for CLI exit codes.
enum class ErrorCategory {
  InvalidArgument = 2,
  DimensionMismatch = 3,
  DegenerateScale = 4,
  Convergence = 5,
  Selection = 6,
  Io = 7,
};

inline const char* to_string(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::InvalidArgument: return "invalid_argument";
    case ErrorCategory::DimensionMismatch: return "dimension_mismatch";
    case ErrorCategory::DegenerateScale: return "degenerate_scale";
    case ErrorCategory::Convergence: return "convergence";
    case ErrorCategory::Selection: return "selection";
    case ErrorCategory::Io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double last_iterate)
      : Error(ErrorCategory::Convergence, what), last_iterate_(last_iterate) {}

  double last_iterate() const noexcept { return last_iterate_; }

 private:
  double last_iterate_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& what) {
  throw Error(c, what);
}

inline void require(bool cond, const std::string& what,
                    ErrorCategory c = ErrorCategory::InvalidArgument) {
  if (!cond) throw Error(c, what);
}

}  // namespace rplam
