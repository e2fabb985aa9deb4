#pragma once

#include <stdexcept>
#include <string>

namespace hdet {

/// Invalid input: bad config field, malformed file, out-of-range id.
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit the operation.
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A non-finite value showed up where the math promises a finite one.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace hdet
