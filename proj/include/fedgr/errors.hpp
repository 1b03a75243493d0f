#pragma once

#include <stdexcept>
#include <string>

namespace fedgr {

// Violation of the federation contract (unknown client, malformed upload,
// missing sieve where one is required, ...).
class ProtocolError : public std::runtime_error {
 public:
  explicit ProtocolError(const std::string& msg) : std::runtime_error(msg) {}
};

// The mixture fit cannot proceed (e.g. all observations identical).
class DegenerateFitError : public std::runtime_error {
 public:
  explicit DegenerateFitError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file problem; line is 1-based, or -1 for semantic (non-parse) errors.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& msg, int line_no = -1)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg
                                       : msg),
        line(line_no) {}
  int line;
};

}  // namespace fedgr
