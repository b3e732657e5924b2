#pragma once

#include <stdexcept>
#include <string>

namespace gcnet {

// Shape or length disagreement between operands.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN/Inf produced or consumed.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A documented precondition on values (not shapes) was violated,
// e.g. attention weights that do not form a probability vector.
class InvariantError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class SpecError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Malformed tensor file or config file.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad command-line usage or an empty/unusable config.
class UsageError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace gcnet
