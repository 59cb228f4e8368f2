#pragma once

#include <stdexcept>
#include <string>

namespace bru {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A value lies outside the mathematical domain of an operation
/// (non-finite input, radix <= 0, out-of-range label, zero variance).
class DomainError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An operation was invoked in the wrong order, e.g. backward before forward.
class StateError : public Error {
 public:
  using Error::Error;
};

class UnsupportedError : public Error {
 public:
  using Error::Error;
};

/// Malformed dataset file. The message names the byte offset.
class ParseError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Training produced a non-finite loss.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, int epoch, long batch)
      : Error(what), epoch_(epoch), batch_(batch) {}
  int epoch() const noexcept { return epoch_; }
  long batch() const noexcept { return batch_; }

 private:
  int epoch_;
  long batch_;
};

}  // namespace bru
