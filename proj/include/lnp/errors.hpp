#pragma once

#include <stdexcept>
#include <string>

namespace lnp {

// Bad or inconsistent configuration (flags, config files, parameter lists).
// The CLI maps this to exit code 2.
class config_error : public std::runtime_error {
 public:
  explicit config_error(const std::string& what) : std::runtime_error(what) {}
};

// Malformed or contract-violating input data. The CLI maps this to exit
// code 3.
class data_error : public std::runtime_error {
 public:
  explicit data_error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lnp
