#ifndef PIE_ERRORS_HPP_
#define PIE_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace pie {

/// Malformed input text (bad CSV row, bad JSON line, wrong field count).
class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Structurally well-formed input that violates a domain invariant.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File-level failure: missing file, bad magic, truncated payload.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace pie

#endif  // PIE_ERRORS_HPP_
