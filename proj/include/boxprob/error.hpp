#pragma once

#include <stdexcept>
#include <string>

namespace boxprob {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed model / uncertainty / samples document. The message carries
/// the JSON path (or file line) of the offending element.
class ParseError : public Error {
 public:
  using Error::Error;
};

class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Model thresholds and declared feature bounds disagree.
class BoundsError : public Error {
 public:
  using Error::Error;
};

/// Covariance (or converted correlation) matrix is not positive definite.
class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what, double smallest_eigenvalue = 0.0)
      : Error(what), smallest_eigenvalue_(smallest_eigenvalue) {}

  double smallest_eigenvalue() const noexcept { return smallest_eigenvalue_; }

 private:
  double smallest_eigenvalue_;
};

/// The box stream is larger than the configured evaluation budget.
class BoxBudgetExceeded : public Error {
 public:
  using Error::Error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

}  // namespace boxprob
