#pragma once

#include <stdexcept>
#include <string>

namespace rcdens {

//! Configuration problems (missing/unknown keys, bad ranges): exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

//! Input-data problems (CSV schema, non-numeric cells): exit code 3.
struct DataError : std::runtime_error {
  explicit DataError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace rcdens
