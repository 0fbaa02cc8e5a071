#pragma once

#include <stdexcept>
#include <string>

namespace apfit {

// Runtime failure: I/O, non-finite values, reference fetch problems.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Invalid user input: configs, manifests, command-line values.
class ConfigError : public Error {
 public:
  using Error::Error;
};

}  // namespace apfit
