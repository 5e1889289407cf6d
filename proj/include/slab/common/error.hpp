#pragma once

#include <stdexcept>
#include <string>

namespace slab {

// Bad input: malformed files, violated preconditions, rejected config keys.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Anything that goes wrong while doing otherwise valid work (I/O, numerics).
class RuntimeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace slab
