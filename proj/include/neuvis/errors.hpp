#pragma once

#include <stdexcept>
#include <string>

namespace neuvis {

// Error taxonomy. Each class maps to a distinct CLI exit code:
//   ConfigError  -> 2   (bad config keys/values, invalid parameters)
//   DataError    -> 3   (missing/corrupt files, shape mismatches, protocol violations)
//   NumericError -> 4   (non-finite loss, degenerate numeric state)
//   RefusalError -> 5   (would clobber outputs without --force, fingerprint mismatch)
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
  using Error::Error;
};

struct DataError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct RefusalError : Error {
  using Error::Error;
};

}  // namespace neuvis
