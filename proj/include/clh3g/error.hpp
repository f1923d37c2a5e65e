#pragma once

#include <stdexcept>
#include <string>

namespace clh3g {

// Error taxonomy. The CLI maps these onto exit codes: usage/parse
// problems exit 2, configuration problems exit 3, everything else 4.

// Tensor shapes disagree with an operation's contract.
struct ShapeError : std::runtime_error {
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// A precondition of an operation was violated by the caller.
struct ContractError : std::runtime_error {
  explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite values or otherwise undefined numeric results.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid configuration value (bad hyperparameter, bad flag value).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed input data (corpus lines, manifests, checkpoints).
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem or I/O failure.
struct IoError : std::runtime_error {
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace clh3g
