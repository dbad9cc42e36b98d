#pragma once

#include <stdexcept>
#include <string>

namespace hpdc {

/// Base class for every error raised by the codec.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class RangeError : public Error {
 public:
  using Error::Error;
};

class ArgumentError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Planes or maps that violate their invariants.
class DataError : public Error {
 public:
  using Error::Error;
};

class DecodeError : public Error {
 public:
  using Error::Error;
};

class AlphabetError : public Error {
 public:
  using Error::Error;
};

class TrainingError : public Error {
 public:
  using Error::Error;
};

/// A decoded result differs from what was encoded.
class VerificationError : public Error {
 public:
  using Error::Error;
};

}  // namespace hpdc
