#pragma once

#include <stdexcept>

namespace dlab {

// Invalid user configuration (bad flag values, inconsistent settings).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// File-system failures: unreadable inputs, unwritable outputs.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed binary files (bad magic, truncated payload, wrong shapes).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dlab
