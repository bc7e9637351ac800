#pragma once

#include <stdexcept>
#include <string>

namespace robustbeta {

/// Argument outside the mathematical domain of a function (y outside (0,1), non-positive shape, ...).
class DomainError : public std::domain_error {
 public:
  explicit DomainError(const std::string& what) : std::domain_error(what) {}
};

/// Malformed input: dimension mismatch, rank-deficient design, bad configuration.
class InvalidArgument : public std::invalid_argument {
 public:
  explicit InvalidArgument(const std::string& what) : std::invalid_argument(what) {}
};

/// A matrix that must be inverted failed the reciprocal-condition guard.
class SingularMatrix : public std::runtime_error {
 public:
  explicit SingularMatrix(const std::string& what) : std::runtime_error(what) {}
};

/// Non-finite intermediate value, overflow, or an iterative routine that did not converge.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace robustbeta
