#pragma once

#include <stdexcept>
#include <string>

namespace beetl {

// Root of every error raised by the library. The CLI maps the three
// families below onto exit codes 2 (config), 3 (data), 4 (numerical).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid configuration or argument values supplied by the caller.
class ConfigError : public Error {
 public:
  ConfigError(const std::string& field, const std::string& message)
      : Error(field.empty() ? message : field + ": " + message), field_(field) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

// Malformed or inconsistent data: shape mismatches, unknown ids, bad files.
class DataError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public DataError {
 public:
  using DataError::DataError;
};

// Numerical failure: non-SPD input, solver non-convergence, non-finite loss.
class NumericalError : public Error {
 public:
  using Error::Error;
};

class NotPositiveDefinite : public NumericalError {
 public:
  using NumericalError::NumericalError;
};

class ConvergenceError : public NumericalError {
 public:
  ConvergenceError(const std::string& message, int iterations, double residual)
      : NumericalError(message + " (iterations " + std::to_string(iterations) +
                       ", residual " + std::to_string(residual) + ")"),
        iterations_(iterations),
        residual_(residual) {}

  int iterations() const noexcept { return iterations_; }
  double residual() const noexcept { return residual_; }

 private:
  int iterations_;
  double residual_;
};

}  // namespace beetl
