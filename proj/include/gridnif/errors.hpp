#pragma once

#include <stdexcept>
#include <string>

namespace gridnif {

/// Rejected input: malformed files, violated preconditions, degenerate networks.
class ValidationError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Training or iteration blew up numerically.
class DivergenceError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

}  // namespace gridnif
