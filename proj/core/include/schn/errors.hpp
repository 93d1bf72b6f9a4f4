#pragma once

#include <stdexcept>
#include <string>

namespace schn {

// Invalid shapes, out-of-range hyperparameters, malformed config files.
class ConfigError : public std::invalid_argument {
 public:
  explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

// NaN/Inf produced by a forward operator or a loss.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

// Misuse of the autodiff API (e.g. backward on a non-scalar).
class UsageError : public std::logic_error {
 public:
  explicit UsageError(const std::string& what) : std::logic_error(what) {}
};

// Unreadable, truncated or version-mismatched files.
class FormatError : public std::runtime_error {
 public:
  explicit FormatError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace schn
