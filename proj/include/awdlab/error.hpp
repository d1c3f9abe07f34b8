#pragma once

#include <stdexcept>
#include <string>

namespace awdlab {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DimensionError : public Error { using Error::Error; };
class IndexError : public Error { using Error::Error; };
class ConfigError : public Error { using Error::Error; };
class StateError : public Error { using Error::Error; };
class RangeError : public Error { using Error::Error; };
class InputError : public Error { using Error::Error; };
class FormatError : public Error { using Error::Error; };

// Raised when a loss or gradient stops being finite.
class NumericError : public Error { using Error::Error; };

}  // namespace awdlab
