#pragma once

#include <stdexcept>
#include <string>

namespace mhscreen {

// Error categories map onto CLI exit codes:
//   ConfigError -> 2, DataError -> 3, BackendError/ClientError/TrainError -> 4,
//   PartialFailure -> 5. API misuse throws std::invalid_argument or
//   std::logic_error and is a caller bug, not a runtime condition.

class ConfigError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Malformed or invariant-violating input data (parse, validation, join,
// split, imbalance, layout errors).
class DataError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class BackendError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

class ClientError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Training failures, e.g. a non-finite loss. Message names the epoch.
class TrainError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

// Some units of a batch job failed while others completed.
class PartialFailure : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace mhscreen
