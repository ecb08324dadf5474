#pragma once

#include <stdexcept>
#include <string>

namespace plt {

/// Operand extents do not line up.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// NaN/inf where a finite value is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A query row has no key it is allowed to attend.
class EmptyContextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidLoopError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class EmptyInputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Sequence position would exceed the configured maximum.
class CapacityError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Training produced a non-finite loss.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace plt
