#pragma once

#include <stdexcept>
#include <string>

namespace modgate {

/// Operand shapes do not conform to an operator's contract.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A forward or backward pass produced NaN or Inf.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Misuse of the differentiation graph (non-scalar loss, consumed graph,
/// missing gradient).
class GraphError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Malformed text or binary input.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid configuration value.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

}  // namespace modgate
