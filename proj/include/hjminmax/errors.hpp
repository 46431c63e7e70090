// Exception types; the CLI maps each family to an exit code.
#pragma once

#include <stdexcept>
#include <string>

namespace hjminmax {

// Invalid scenario or argument (exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Integration, root finding or target failure (exit code 3).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The fiber box could not be certified or terminals never connected (exit code 4).
class CertificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hjminmax
