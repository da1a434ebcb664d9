#pragma once

#include <stdexcept>
#include <string>

namespace mind {

// Malformed or inconsistent input: bad files, bad offsets, shape mismatches.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or a diverged optimization.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mind
