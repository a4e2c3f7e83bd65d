#pragma once

#include <stdexcept>
#include <string>

namespace eigenopt {

/// Unknown names, malformed or missing configuration fields.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical or structural input that violates an operation's contract.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// An option (or layout) could not be built from the given ingredients.
class ConstructionError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Caller broke a documented precondition (e.g. starting an option outside
/// its initiation set).
class PreconditionError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace eigenopt
