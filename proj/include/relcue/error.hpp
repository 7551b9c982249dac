#pragma once

#include <stdexcept>
#include <string>

namespace relcue {

// Raised for invalid inputs: malformed files, violated preconditions,
// degenerate data. The CLI maps it to exit code 2.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// Raised for configuration problems. The message names the offending field.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what) : Error(what) {}
};

inline void require(bool cond, const std::string& what) {
  if (!cond) throw Error(what);
}

}  // namespace relcue
