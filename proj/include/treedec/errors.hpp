#pragma once

/**
 * Error taxonomy shared across the library.
 *
 * InputError      - malformed user-supplied data (vocabulary, corpus, sequences).
 * LoadError       - unreadable or invalid model/grammar files.
 * ConfigError     - invalid run configuration (unknown keys, bad values).
 * StructuralError - references to ids that do not exist.
 * ContractViolation - misuse of an operation's preconditions.
 * CapExceeded     - an enumeration refused to run because it would exceed
 *                   its size budget; carries the size estimate.
 */

#include <stdexcept>
#include <string>

namespace treedec {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InputError : Error {
  using Error::Error;
};

struct LoadError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct StructuralError : Error {
  using Error::Error;
};

struct ContractViolation : Error {
  using Error::Error;
};

struct CapExceeded : Error {
  double estimate;
  CapExceeded(const std::string& msg, double size_estimate)
      : Error(msg), estimate(size_estimate) {}
};

}  // namespace treedec
