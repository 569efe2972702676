#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace bro {

/// Shape mismatch between operands or a malformed tensor.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Caller violated a documented precondition.
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A parameter matrix is (numerically) rank deficient, so no orthogonal
/// operator can be derived from it without regularization.
class SingularParameter : public std::runtime_error {
 public:
  SingularParameter(std::size_t pivot, double condition_estimate, const std::string& where)
      : std::runtime_error(where + ": non-positive pivot at index " + std::to_string(pivot) +
                           " (condition estimate " + std::to_string(condition_estimate) + ")"),
        pivot_(pivot),
        condition_estimate_(condition_estimate) {}

  std::size_t pivot() const noexcept { return pivot_; }
  double condition_estimate() const noexcept { return condition_estimate_; }

 private:
  std::size_t pivot_;
  double condition_estimate_;
};

/// An iterative method produced a non-finite value.
class DivergedError : public std::runtime_error {
 public:
  DivergedError(std::size_t iteration, const std::string& where)
      : std::runtime_error(where + ": non-finite value at iteration " + std::to_string(iteration)),
        iteration_(iteration) {}

  std::size_t iteration() const noexcept { return iteration_; }

 private:
  std::size_t iteration_;
};

/// Malformed or incompatible serialized data.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace bro
