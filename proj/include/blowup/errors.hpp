#pragma once

#include <stdexcept>
#include <string>

namespace blowup {

// Invalid user input: bad expressions, parameters out of range,
// malformed configuration.  The CLI maps these to exit status 2.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// A numerical routine gave up: quadrature did not converge, a scheme
// went unstable, a solve produced out-of-range values.  The CLI maps
// these to exit status 3.
class NumericError : public std::runtime_error {
 public:
  explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

// A coefficient function was evaluated at a singular point (log of a
// nonpositive number, division by zero, 0^negative, ...).
class EvalDomainError : public NumericError {
 public:
  explicit EvalDomainError(const std::string& what) : NumericError(what) {}
};

}  // namespace blowup
