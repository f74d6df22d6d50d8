#pragma once

#include <stdexcept>
#include <string>

namespace steerkit {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Tensor/layer extents do not line up; message names the offending axis.
class DimError : public Error {
 public:
  using Error::Error;
};

// Bad user-supplied configuration (rates, layer chains, empty datasets).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Malformed input file (driving log, track JSON); message carries row/column.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Weights/checkpoint file fails magic, version, structure or CRC validation.
class CorruptFileError : public Error {
 public:
  using Error::Error;
};

// Weights file is well-formed but does not match the expected network.
class IncompatibleWeightsError : public Error {
 public:
  using Error::Error;
};

// Training aborted (diverged loss, non-finite gradient); names epoch/layer.
class TrainingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace steerkit
