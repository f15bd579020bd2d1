#pragma once

#include <stdexcept>
#include <string>

namespace nfqe {

/// Inconsistent or unsatisfiable configuration (budgets, mismatched sizes between components).
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Argument outside the mathematical domain of an operation (K < 2, empty data, negative chi2).
struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Vector or matrix dimensions do not agree.
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Loaded data failed validation (probability rows, reward ranges, file headers).
struct ValidationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace nfqe
