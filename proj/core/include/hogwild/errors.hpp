#pragma once

#include <stdexcept>
#include <string>

namespace hogwild {

// Exit-code mapping for the CLI: usage/config errors -> 2, numeric errors -> 3.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

struct ConfigError : UsageError {
  explicit ConfigError(const std::string& msg) : UsageError(msg) {}
};

// Dimension mismatches and malformed tensor arguments.
struct ShapeError : UsageError {
  explicit ShapeError(const std::string& msg) : UsageError(msg) {}
};

// Non-finite values, failed factorizations, diverging solves.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hogwild
