#pragma once

#include <stdexcept>
#include <string>

namespace defect_foundry {

/// Raised when caller-supplied data violates an operation's precondition.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when an analysis cannot produce a usable result (fit failure,
/// empty sample after filtering, ...).
class AnalysisError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) throw InputError(message);
}

}  // namespace defect_foundry
