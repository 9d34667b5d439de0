#pragma once

#include <stdexcept>
#include <string>

namespace hybridboost {

/// Root of every exception thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor or matrix extents disagree with what an operation requires.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An invalid configuration value (negative rate, too many halvings, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Input data cannot support the requested operation (empty set, tiny class).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Only one class present where two or more are required.
class DegenerateError : public DataError {
 public:
  using DataError::DataError;
};

/// Feature matrices that should share rows and labels do not.
class AlignmentError : public DataError {
 public:
  using DataError::DataError;
};

/// A label lies outside [0, num_classes).
class LabelError : public DataError {
 public:
  using DataError::DataError;
};

/// A file does not follow its declared binary or text layout.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// File length disagrees with the sizes declared in its header.
class CorruptionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// A file was written by an incompatible format version.
class VersionError : public FormatError {
 public:
  using FormatError::FormatError;
};

/// Filesystem failure while reading or writing a named path.
class IoError : public Error {
 public:
  using Error::Error;
};

/// A backward call received state that does not match its forward call.
class StateError : public Error {
 public:
  using Error::Error;
};

/// An iterative solver stopped before reaching its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}
  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace hybridboost
