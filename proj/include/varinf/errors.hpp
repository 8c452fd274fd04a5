#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace varinf {

/// Malformed model text. Carries the 1-based line and the offending field.
class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t line, std::string field, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ", field '" + field +
                           "': " + what),
        line_(line),
        field_(std::move(field)) {}

  std::size_t line() const noexcept { return line_; }
  const std::string& field() const noexcept { return field_; }

 private:
  std::size_t line_;
  std::string field_;
};

/// Exhaustive enumeration requested above the configured node cap.
class EnumerationCapExceeded : public std::runtime_error {
 public:
  EnumerationCapExceeded(std::size_t nodes, std::size_t cap)
      : std::runtime_error("exact enumeration over " + std::to_string(nodes) +
                           " nodes exceeds the cap of " + std::to_string(cap)) {}
};

/// Invalid experiment configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace varinf
