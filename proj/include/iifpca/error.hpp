#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace iifpca {

/// Base class for all errors raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A precondition on an argument was violated (bad order, t outside [0, tau], ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// A model parameter leaves the admissible region (e.g. a nonpositive baseline intensity).
class DomainError : public Error {
 public:
  using Error::Error;
};

/// Input data violates a dataset invariant. Carries one message per offending row.
class DataError : public Error {
 public:
  explicit DataError(std::string what, std::vector<std::string> violations = {})
      : Error(compose(what, violations)), violations_(std::move(violations)) {}

  const std::vector<std::string>& violations() const noexcept { return violations_; }

 private:
  static std::string compose(const std::string& what, const std::vector<std::string>& v) {
    std::string out = what;
    constexpr std::size_t kShown = 10;
    for (std::size_t i = 0; i < v.size() && i < kShown; ++i) out += "\n  " + v[i];
    if (v.size() > kShown) out += "\n  ... (" + std::to_string(v.size() - kShown) + " more)";
    return out;
  }

  std::vector<std::string> violations_;
};

/// A penalized normal-equation system is not positive definite.
class SingularSystemError : public Error {
 public:
  using Error::Error;
};

/// An iterative optimizer stopped without meeting its tolerance.
class ConvergenceError : public Error {
 public:
  ConvergenceError(const std::string& what, Eigen::VectorXd last_iterate, double gradient_norm)
      : Error(what), last_iterate_(std::move(last_iterate)), gradient_norm_(gradient_norm) {}

  const Eigen::VectorXd& last_iterate() const noexcept { return last_iterate_; }
  double gradient_norm() const noexcept { return gradient_norm_; }

 private:
  Eigen::VectorXd last_iterate_;
  double gradient_norm_;
};

}  // namespace iifpca
