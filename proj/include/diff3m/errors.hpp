#pragma once

#include <stdexcept>
#include <string>

namespace diff3m {

/// Operand shapes do not conform to an operation's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Invalid configuration value, unknown key or bad usage.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Input data violates a contract (e.g. an anomalous sample in a training split,
/// schema mismatch between a record and a checkpoint).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File system failure. The message always names the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace diff3m
