#pragma once

#include <stdexcept>
#include <string>

namespace hierpose {

/// Raised for every contract violation in the library (bad input, missing
/// lookup keys, malformed files). Messages name the offending value.
class Error : public std::runtime_error {
public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace hierpose
