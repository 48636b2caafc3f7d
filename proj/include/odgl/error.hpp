#pragma once

#include <stdexcept>
#include <string>

namespace odgl {

/// Invalid user-supplied parameter (bad k, p, radius, dims, ...).
class ParameterError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Requested computation exceeds a hard budget (e.g. 2^n enumeration).
class BudgetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite value produced inside a numeric kernel.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed file or record; the message carries the location.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace odgl
