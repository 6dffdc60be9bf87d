#pragma once

#include <stdexcept>
#include <string>

namespace rmen {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor extents or parameter shapes do not agree.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// NaN/Inf appeared where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Binary or text file does not follow its declared layout.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// Not enough samples/peaks/frames to run an operation.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or argument values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Filesystem failures (missing files, unwritable paths).
class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace rmen
