#pragma once

#include <stdexcept>
#include <string>

namespace prefopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed input: bad records, flags, configs, out-of-range indices.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// A probability that must be positive is zero (division or log of zero).
class SupportError : public Error {
 public:
  using Error::Error;
};

// Overflow, non-finite loss, or a failed numerical check.
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace prefopt
