#pragma once

#include <stdexcept>
#include <string>

namespace hsialign {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Precondition or invariant violation on caller-supplied data.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

/// Two operands whose shapes must agree do not.
class DimensionMismatch : public InvalidInput {
 public:
  using InvalidInput::InvalidInput;
};

enum class ParseErrorKind {
  kIo,
  kBadMagic,
  kBadHeader,
  kTruncated,
  kTrailingData,
  kInvalidWavelengths,
  kNonFinite,
  kUnsupportedFormat,
};

const char* to_string(ParseErrorKind kind);

/// Failure to decode one of the on-disk containers (HSIC, SWRP, PNG).
class ParseError : public Error {
 public:
  ParseError(ParseErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ParseErrorKind kind() const noexcept { return kind_; }

 private:
  ParseErrorKind kind_;
};

/// Numerical routine failed to reach its stopping criterion.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, double residual)
      : Error(what), residual_(residual) {}

  double residual() const noexcept { return residual_; }

 private:
  double residual_;
};

}  // namespace hsialign
