#pragma once

#include <stdexcept>
#include <string>

namespace fedhet {

// Invalid argument to a pure operation (bad sizes, out-of-range values).
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed external data (IDX files, CSV).
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Not enough samples / clients / classes to satisfy a request.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A search or construction could not meet its target.
class InfeasibleError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Inconsistent experiment or federation configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace fedhet
