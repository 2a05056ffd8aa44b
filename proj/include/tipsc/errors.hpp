#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace tipsc {

/// Root of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "error"; }
};

/// A caller-supplied argument violates an operation's precondition.
class ParameterError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "parameter_error"; }
};

/// tau bisection could not reach the target rate within tolerance.
class CalibrationError : public Error {
 public:
  CalibrationError(const std::string& what, double lower, double upper, double best_rate)
      : Error(what), lower_(lower), upper_(upper), best_rate_(best_rate) {}
  const char* kind() const noexcept override { return "calibration_error"; }

  double bracket_lower() const noexcept { return lower_; }
  double bracket_upper() const noexcept { return upper_; }
  double best_rate() const noexcept { return best_rate_; }

 private:
  double lower_;
  double upper_;
  double best_rate_;
};

/// Eigensolver failed to certify its eigenpairs.
class SolverError : public Error {
 public:
  SolverError(const std::string& what, std::vector<double> residuals = {})
      : Error(what), residuals_(std::move(residuals)) {}
  const char* kind() const noexcept override { return "solver_error"; }
  const std::vector<double>& residuals() const noexcept { return residuals_; }

 private:
  std::vector<double> residuals_;
};

/// The all-ones direction has (numerically) no component in the top-2 eigenspace.
class DegenerateProjectionError : public Error {
 public:
  DegenerateProjectionError(const std::string& what, double projection_norm)
      : Error(what), projection_norm_(projection_norm) {}
  const char* kind() const noexcept override { return "degenerate_projection"; }
  double projection_norm() const noexcept { return projection_norm_; }

 private:
  double projection_norm_;
};

/// A closed-form bound is evaluated outside the regime where it is stated.
class InapplicableBoundError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "inapplicable_bound"; }
};

class UnsupportedOperationError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "unsupported_operation"; }
};

/// Malformed file or config content.
class FormatError : public Error {
 public:
  using Error::Error;
  const char* kind() const noexcept override { return "format_error"; }
};

}  // namespace tipsc
