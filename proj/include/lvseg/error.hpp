#pragma once

#include <stdexcept>
#include <string>

namespace lvseg {

// Base of every error raised by the library. The CLI maps the subclasses
// onto its exit codes (config 2, I/O 3, localization 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class SizeMismatchError : public FormatError {
 public:
  using FormatError::FormatError;
};

class IoError : public Error {
 public:
  using Error::Error;
};

class BoundsError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class GridError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class IncompatibleError : public Error {
 public:
  using Error::Error;
};

class UndefinedDistanceError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  NumericError(std::size_t layer, const std::string& what)
      : Error("non-finite value at layer " + std::to_string(layer) + ": " + what), layer_(layer) {}
  std::size_t layer() const noexcept { return layer_; }

 private:
  std::size_t layer_;
};

class LocalizationError : public Error {
 public:
  LocalizationError(std::string axis, const std::string& what) : Error(what), axis_(std::move(axis)) {}
  const std::string& axis() const noexcept { return axis_; }

 private:
  std::string axis_;
};

}  // namespace lvseg
