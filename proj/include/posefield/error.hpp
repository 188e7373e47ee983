#pragma once

#include <stdexcept>
#include <string>

namespace posefield {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes are incompatible.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// A coordinate lies outside the range a grid or renderer accepts.
class RangeError : public Error {
 public:
  using Error::Error;
};

/// A caller broke an operation's precondition (non-scalar loss, oversized step, ...).
class ContractError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// A file was written by an incompatible format version or is malformed.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// File content does not match its recorded checksum or size.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

class OptimizerError : public Error {
 public:
  using Error::Error;
};

class DeterminismError : public Error {
 public:
  using Error::Error;
};

/// Checkpoint and dataset (or two checkpoints) describe different shapes.
class IncompatibleError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class NonFiniteLossError : public Error {
 public:
  using Error::Error;
};

}  // namespace posefield
