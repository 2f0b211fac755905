#pragma once

#include <stdexcept>
#include <string>

namespace zsar {

// Shape or dimension disagreement between operands.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

// Input for which an operation is undefined (zero norm, too few frames, ...).
class DegenerateInputError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

// A computation produced NaN or Inf.
class NumericDomainError : public std::domain_error {
  public:
    using std::domain_error::domain_error;
};

class IndexError : public std::out_of_range {
  public:
    using std::out_of_range::out_of_range;
};

// Invalid hyperparameter (non-positive temperature, negative weight, ...).
class ParameterError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

}  // namespace zsar
