#pragma once

#include <stdexcept>
#include <string>

namespace csl {

/// Invalid user input: configuration values, parameter ranges, shapes.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A numerical invariant (trace, hermiticity, step error, weak field) was violated.
class InvariantViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Failure reading or writing files.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace csl
