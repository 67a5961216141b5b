#pragma once

#include <stdexcept>
#include <string>

namespace adloco {

// Bad configuration: unknown recipe, non-positive test threshold, malformed
// config file. Reported to the user before a run starts.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse at run time: empty batch, mismatched dimensions, merging dead
// trainers.
struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace adloco
