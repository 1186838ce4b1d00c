#pragma once

#include <stdexcept>
#include <string>

namespace tube {

// Bad user input: config files, schema violations, missing inputs.
// The CLI maps this to exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// A library invariant failed during evaluation. The CLI maps this (and any
// other unexpected exception) to exit code 3.
struct InvariantError : std::runtime_error {
  explicit InvariantError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tube
