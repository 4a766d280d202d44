#pragma once

#include <stdexcept>
#include <string>

namespace absa {

// Malformed input files, bad records, invalid spans.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated structural invariants: shape mismatches, cyclic trees, bad spans.
struct StructuralError : std::runtime_error {
  explicit StructuralError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaping an op, all-masked softmax rows, zero-vector similarity.
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// User-facing configuration problems (missing files, bad flag combinations).
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace absa
