#pragma once

#include <stdexcept>
#include <string>

namespace slbr {

// Caller broke a documented precondition (shape mismatch, bad dims, ...).
class ContractError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// A file or dataset on disk is missing, truncated or malformed.
class LoadError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid or incomplete configuration.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A checkpoint or weight file does not match the runtime configuration.
class CompatibilityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Training produced a non-finite value.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw ContractError(what);
}

}  // namespace slbr
