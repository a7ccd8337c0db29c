#pragma once

#include <stdexcept>
#include <string>

namespace ascent {

// Error hierarchy. The CLI maps these onto exit codes:
// UsageError/ConfigError -> 1, DataError/IoError -> 2, NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionError : Error {
  using Error::Error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

constexpr double kPi = 3.14159265358979323846;

}  // namespace ascent
