#pragma once

#include <stdexcept>
#include <string>

namespace vio {

// Base for all library errors.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/layer shape mismatch. Messages name the offending shapes.
struct DimensionError : Error {
  explicit DimensionError(const std::string& msg) : Error(msg) {}
};

// Invalid configuration values (bad sizes, rates outside [0,1], unknown tags).
struct ConfigError : Error {
  explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Malformed input files (pose files, checkpoints, manifests).
struct FormatError : Error {
  explicit FormatError(const std::string& msg) : Error(msg) {}
};

// Violated API contract (mismatched lengths, missing gradients, reused tape).
struct ContractError : Error {
  explicit ContractError(const std::string& msg) : Error(msg) {}
};

// File-system level failures.
struct IoError : Error {
  explicit IoError(const std::string& msg) : Error(msg) {}
};

}  // namespace vio
