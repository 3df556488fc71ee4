#pragma once

#include <stdexcept>
#include <string>

namespace ccfpse {

/// Operand extents are incompatible with the operation.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A scalar or structural argument is outside its valid domain.
class ArgumentError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A caller violated an API precondition (non-scalar loss, missing grads, ...).
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// An object was used in a state that does not support the request.
class StateError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Input data violates its declared domain (label id out of range, ...).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file has the wrong magic, version or layout.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reading or writing a file failed.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Configuration document is malformed or contains unknown keys.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Training produced a non-finite loss or gradient.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ccfpse
