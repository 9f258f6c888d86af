#pragma once

#include <stdexcept>
#include <string>

namespace wpb {

/// Raised when inputs violate an operation's preconditions (bad shapes,
/// out-of-range labels, invalid configuration). The CLI maps it to exit 1.
class ValidationError : public std::invalid_argument {
 public:
  explicit ValidationError(const std::string& what) : std::invalid_argument(what) {}
};

/// Raised for failures while doing the actual work (I/O, malformed files).
/// The CLI maps it to exit 2.
class RuntimeError : public std::runtime_error {
 public:
  explicit RuntimeError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace wpb
