#pragma once

#include <stdexcept>
#include <string>

namespace ensvar {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid input: bad dimensions, non-SPD covariance, bad configuration values.
class ValidationError : public Error {
 public:
  ValidationError(std::string field, const std::string& what)
      : Error(what), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

class DimensionError : public ValidationError {
 public:
  DimensionError(std::string field, const std::string& detail)
      : ValidationError(field, "dimension mismatch in " + field + ": " + detail) {}
};

class NotSpdError : public ValidationError {
 public:
  explicit NotSpdError(std::string field)
      : ValidationError(field, field + " is not symmetric positive definite") {}
};

/// An algorithm that needs linear operators received a nonlinear one.
class NonlinearOperatorError : public ValidationError {
 public:
  explicit NonlinearOperatorError(std::string field)
      : ValidationError(field, field + " is not flagged linear") {}
};

/// An algorithm needs an exact Jacobian that was not registered.
class MissingJacobianError : public ValidationError {
 public:
  explicit MissingJacobianError(std::string field)
      : ValidationError(field, field + " has no registered Jacobian") {}
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace ensvar
