#pragma once

#include <stdexcept>
#include <string>

namespace agm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Compare-and-swap lost: the stored version differs from the expected one.
class VersionConflict : public Error {
 public:
  using Error::Error;
};

class AlreadyExists : public Error {
 public:
  using Error::Error;
};

class NotFound : public Error {
 public:
  using Error::Error;
};

/// An operation's precondition on entity state does not hold.
class StateConflict : public Error {
 public:
  using Error::Error;
};

/// Malformed input (bad JSON, out-of-range field, unknown enum value).
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// I/O failure in the persistence layer.
class StorageError : public Error {
 public:
  using Error::Error;
};

}  // namespace agm
