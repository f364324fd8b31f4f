#pragma once

#include <stdexcept>
#include <string>

namespace cgm {

// Internal/numerical failure (solver divergence, invariant breach, ...).
// The CLI maps this to exit code 1.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad user input (unparseable file, wrong topology, missing artifact, ...).
// The CLI maps this to exit code 2.
struct InputError : Error {
  explicit InputError(const std::string& msg) : Error(msg) {}
};

}  // namespace cgm
