#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace fabreg {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid user input: bad dimensions, out-of-range parameters, malformed files.
class InputError : public Error {
 public:
  using Error::Error;
};

/// Argument outside the mathematical domain of a function (e.g. quantile of 0).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Numerical failure: singular systems, non-convergence.
class NumericError : public Error {
 public:
  using Error::Error;
};

class RankDeficientError : public NumericError {
 public:
  RankDeficientError(std::size_t column, std::string column_name)
      : NumericError("design matrix is rank deficient: column " +
                     std::to_string(column) + " ('" + column_name +
                     "') is linearly dependent on earlier columns"),
        column_(column),
        name_(std::move(column_name)) {}

  std::size_t column() const noexcept { return column_; }
  const std::string& column_name() const noexcept { return name_; }

 private:
  std::size_t column_;
  std::string name_;
};

/// No adaptation data is available for a coefficient (p = 1).
class EmptyContextError : public Error {
 public:
  using Error::Error;
};

/// The 2x2 moment system is singular (degenerate spectrum).
class SingularMomentSystemError : public NumericError {
 public:
  using NumericError::NumericError;
};

/// Endpoint root finding did not converge.
class ConvergenceError : public NumericError {
 public:
  ConvergenceError(const std::string& what, double bracket_lo, double bracket_hi,
                   double f_lo, double f_hi, int iterations)
      : NumericError(what + " (bracket [" + std::to_string(bracket_lo) + ", " +
                     std::to_string(bracket_hi) + "], residuals [" +
                     std::to_string(f_lo) + ", " + std::to_string(f_hi) +
                     "], iterations " + std::to_string(iterations) + ")"),
        lo(bracket_lo),
        hi(bracket_hi),
        f_lo(f_lo),
        f_hi(f_hi),
        iterations(iterations) {}

  double lo, hi, f_lo, f_hi;
  int iterations;
};

/// Marginal-likelihood optimizer failure; carries the seeds it tried.
class OptimizerError : public NumericError {
 public:
  struct Seed {
    double tau2;
    double sigma2;
    double objective;
  };

  OptimizerError(const std::string& what, std::vector<Seed> trace)
      : NumericError(what), trace(std::move(trace)) {}

  std::vector<Seed> trace;
};

}  // namespace fabreg
