#pragma once

#include <stdexcept>
#include <string>

namespace rigkit {

/// Malformed or inconsistent input data (files, dimensions, rig invariants).
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Numerical failure: divergence, non-finite losses, degenerate geometry.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require(bool condition, const std::string& message) {
  if (!condition) {
    throw DataError(message);
  }
}

} // namespace rigkit
