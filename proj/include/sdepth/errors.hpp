#pragma once

#include <stdexcept>
#include <string>

namespace sdepth {

/// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Inconsistent shapes, bad configuration keys, invalid flag combinations.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Missing or unreadable input files and malformed datasets.
class DataError : public Error {
 public:
  using Error::Error;
};

/// Non-finite losses or other numerical breakdowns during training.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Corrupt checkpoint archives or incompatible resume attempts.
class CheckpointError : public Error {
 public:
  using Error::Error;
};

}  // namespace sdepth
