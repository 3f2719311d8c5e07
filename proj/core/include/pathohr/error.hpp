#pragma once

#include <stdexcept>
#include <string>

namespace pathohr {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Shapes or lengths that do not agree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf produced or consumed where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

class EmptyInputError : public Error {
 public:
  using Error::Error;
};

/// Token merging requested on fewer tokens than the operation needs.
class MergeNotApplicable : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Malformed or truncated file payloads.
class FormatError : public Error {
 public:
  using Error::Error;
};

class IndexError : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public NumericError {
 public:
  using NumericError::NumericError;
};

/// A metric that has no value for the given input (e.g. AUC with one class).
class UndefinedMetric : public Error {
 public:
  using Error::Error;
};

}  // namespace pathohr
