#pragma once

#include <stdexcept>
#include <string>

namespace dpgen {

// Malformed or inconsistent configuration (bad key, bad value, unknown key).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed data file: IDX payloads, checkpoints, banks.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Non-finite values or ill-conditioned linear algebra.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Operation used out of sequence (stale cache, missing section, wrong shape state).
class InvalidStateError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpgen
