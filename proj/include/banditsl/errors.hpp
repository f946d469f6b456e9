#pragma once

#include <stdexcept>

namespace banditsl {

// Caller broke a documented precondition or type invariant.
struct ContractViolation : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

// Malformed or inconsistent input data (dataset files, embedding files,
// classes that cannot be trained on).
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Invalid run configuration.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Linear-algebra failure that survived jitter escalation, or a non-finite
// result where a finite one is required.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Filesystem read/write failure.
struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace banditsl
