#pragma once

#include <stdexcept>
#include <string>

namespace signica {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operands disagree in alphabet size, depth, grid or path count.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

/// A diagonal second-level cumulant (or a variance) is too small to divide by.
class DegenerateNormalization : public Error {
 public:
  using Error::Error;
};

/// A map was evaluated outside its declared domain.
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Invalid argument or configuration value. `field()` names the offending input.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(field + ": " + what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

/// The requested operation is not available for this input kind.
class Unsupported : public Error {
 public:
  using Error::Error;
};

/// A covariance matrix could not be factorized even after jitter.
class NotPositiveDefinite : public Error {
 public:
  using Error::Error;
};

}  // namespace signica
