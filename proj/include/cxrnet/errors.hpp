#pragma once

#include <stdexcept>
#include <string>

namespace cxr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Incompatible tensor shapes or extents.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Layer used out of sequence (e.g. backward without a matching forward).
class StateError : public Error {
 public:
  using Error::Error;
};

/// Input with no spread where spread is required (e.g. a constant channel).
class DegenerateInputError : public DomainError {
 public:
  using DomainError::DomainError;
};

/// Malformed or non-chaining architecture description.
class SpecError : public Error {
 public:
  using Error::Error;
};

/// Unreadable or undecodable input file.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Dataset layout or content problem.
class DatasetError : public Error {
 public:
  using Error::Error;
};

/// Bad run configuration.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf encountered during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace cxr
