#pragma once

#include <stdexcept>
#include <string>

namespace ringflow {

// Configuration and validation failures. The CLI maps these to exit code 2;
// everything else that escapes is a runtime failure (exit code 1).
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace ringflow
