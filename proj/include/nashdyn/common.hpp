// Shared error helpers.
#pragma once

#include <stdexcept>
#include <string>

namespace nashdyn {

// Thrown on invalid arguments / configuration (caller mistakes).
struct ConfigError : std::invalid_argument {
  explicit ConfigError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Thrown when a computation produces invalid results (non-finite values,
// singular systems, unsupported game/method combinations).
struct NumericError : std::runtime_error {
  explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw ConfigError(msg);
}

inline void require_numeric(bool cond, const std::string& msg) {
  if (!cond) throw NumericError(msg);
}

}  // namespace nashdyn
