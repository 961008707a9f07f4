#pragma once

#include <stdexcept>
#include <string>

namespace ncdetect {

// Exit-code mapping used by the CLI: usage 1, data 2, numeric 3.

/// Malformed input: bad magic, unreadable CSV, out-of-range argument.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// File does not match the declared binary or CSV layout.
class FormatError : public DataError {
 public:
  using DataError::DataError;
};

/// Two inputs that must agree (row counts, ids, labels) do not.
class ConsistencyError : public DataError {
 public:
  using DataError::DataError;
};

/// An iterative method failed to converge or produced non-finite output.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace ncdetect
