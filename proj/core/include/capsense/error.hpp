#pragma once

#include <stdexcept>
#include <string>

namespace capsense {

/// Argument outside the mathematical domain of an operation (non-positive
/// capacitance, empty array, unsupported resolution).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Mismatched vector/matrix dimensions.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A programmed weight voltage outside [-1, 1].
class RangeError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

/// Non-finite value where a finite one is required.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bad configuration or misuse of an API (missing trace, bad file).
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace capsense
