#pragma once

#include <stdexcept>
#include <string>

namespace pcnn {

// File and dataset problems: missing inputs, malformed headers, bad
// checkpoints. Mapped to exit code 2 by the CLI.
class io_error : public std::runtime_error {
 public:
  explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

// Numeric failures: NaN losses, gradient checks out of tolerance.
// Mapped to exit code 3 by the CLI.
class numeric_error : public std::runtime_error {
 public:
  explicit numeric_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace pcnn
