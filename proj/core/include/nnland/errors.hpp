#pragma once

#include <stdexcept>
#include <string>

namespace nnland {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not fit together, or a size cap was exceeded.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// An operation was called outside the region where its formula is valid.
class PreconditionError : public Error {
 public:
  using Error::Error;
};

/// A numerical routine could not produce a trustworthy result.
class NumericalError : public Error {
 public:
  using Error::Error;
};

/// Malformed fixture or configuration text.
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Invalid experiment configuration. Carries the offending field name.
class ConfigError : public Error {
 public:
  ConfigError(std::string field, const std::string& message)
      : Error("config field '" + field + "': " + message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

}  // namespace nnland
