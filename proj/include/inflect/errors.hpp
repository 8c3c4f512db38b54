#pragma once

#include <stdexcept>
#include <string>

namespace inflect {

// Every failure raised by the library derives from Error and carries a stable
// machine-readable kind string (used by the CLI error records).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define INFLECT_DEFINE_ERROR(Name, Kind)                          \
  class Name : public Error {                                     \
   public:                                                        \
    using Error::Error;                                           \
    const char* kind() const noexcept override { return Kind; }   \
  };

INFLECT_DEFINE_ERROR(InvalidInput, "invalid-input")
INFLECT_DEFINE_ERROR(NumericError, "numeric-error")
INFLECT_DEFINE_ERROR(StateError, "state-error")
INFLECT_DEFINE_ERROR(Conflict, "conflict")
INFLECT_DEFINE_ERROR(DegenerateInput, "degenerate-input")
INFLECT_DEFINE_ERROR(UndefinedInput, "undefined-input")
INFLECT_DEFINE_ERROR(RunFailure, "run-failure")

#undef INFLECT_DEFINE_ERROR

}  // namespace inflect
