#pragma once

#include <stdexcept>
#include <string>

namespace fairgrid {

// Base of every error raised by the library. The CLI maps the concrete
// subclasses onto process exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration: bad parameter values, unknown keys, infeasible
// requests.
class ConfigError : public Error {
 public:
  using Error::Error;
};

// A registered but unimplemented component (reserved mitigation slots,
// reserved base estimators).
class NotImplementedError : public ConfigError {
 public:
  using ConfigError::ConfigError;
};

// Malformed or unusable input data.
class DataError : public Error {
 public:
  using Error::Error;
};

// Input file does not match the declared schema (missing column etc.).
class SchemaError : public DataError {
 public:
  using DataError::DataError;
};

// Caller broke an API precondition (length mismatch, dimension mismatch).
class ContractError : public Error {
 public:
  using Error::Error;
};

// Estimator could not be fitted on the supplied data.
class FitError : public Error {
 public:
  using Error::Error;
};

// Estimator lacks a capability a mitigation method requires.
class CapabilityError : public Error {
 public:
  using Error::Error;
};

// A run finished but produced nothing selectable.
class RunError : public Error {
 public:
  using Error::Error;
};

}  // namespace fairgrid
