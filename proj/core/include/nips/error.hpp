#pragma once

#include <stdexcept>
#include <string>

namespace nips {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Shape or extent mismatch between operands.
struct DimensionError : Error {
  using Error::Error;
};

/// Violated operation precondition.
struct ContractError : Error {
  using Error::Error;
};

/// Invalid model or run configuration.
struct ConfigError : Error {
  using Error::Error;
};

/// Mathematical domain violation (e.g. non-positive permeability).
struct DomainError : Error {
  using Error::Error;
};

/// Linear solver failure; message carries a condition estimate when known.
struct SolverError : Error {
  using Error::Error;
};

/// Malformed container file; offset is the first bad byte when known.
struct FormatError : Error {
  explicit FormatError(const std::string& what, long long at = -1)
      : Error(at >= 0 ? what + " (offset " + std::to_string(at) + ")" : what),
        offset(at) {}
  long long offset;
};

/// Training aborted on a numerical fault; message carries activation stats.
struct TrainingError : Error {
  using Error::Error;
};

}  // namespace nips
