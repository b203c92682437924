#pragma once

#include <stdexcept>
#include <string>

namespace poc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input values (non-finite positions, wrong shapes).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class ParameterError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

class AssumptionViolation : public Error {
 public:
  using Error::Error;
};

// Requested bound/case does not apply in the current parameter regime.
class RegimeError : public Error {
 public:
  using Error::Error;
};

class NumericalError : public Error {
 public:
  using Error::Error;
};

class StepSizeError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class PrecisionError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class InternalConsistencyError : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class BudgetExceeded : public Error {
 public:
  BudgetExceeded(const std::string& what, double estimate, double cap)
      : Error(what), estimate_(estimate), cap_(cap) {}
  double estimate() const { return estimate_; }
  double cap() const { return cap_; }

 private:
  double estimate_;
  double cap_;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace poc
