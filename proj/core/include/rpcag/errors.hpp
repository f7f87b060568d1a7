#pragma once

#include <stdexcept>
#include <string>

namespace rpcag {

// Base of every error raised by the library. kind() names the concrete class
// so the CLI can report it without RTTI tricks.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept = 0;
};

#define RPCAG_DEFINE_ERROR(Name)                                   \
  class Name final : public Error {                                \
   public:                                                         \
    using Error::Error;                                            \
    const char* kind() const noexcept override { return #Name; }   \
  }

// Malformed text input (ragged CSV rows, non-numeric tokens).
RPCAG_DEFINE_ERROR(ParseError);
// Binary layout problems: short files, header/payload mismatch.
RPCAG_DEFINE_ERROR(FormatError);
// Values or shapes that violate a data invariant.
RPCAG_DEFINE_ERROR(DataError);
// Invalid user-supplied parameters.
RPCAG_DEFINE_ERROR(ConfigError);
// Graph construction failures (isolated nodes, too few samples).
RPCAG_DEFINE_ERROR(GraphError);
// SVD/CG failures and non-finite iterates.
RPCAG_DEFINE_ERROR(NumericsError);

#undef RPCAG_DEFINE_ERROR

}  // namespace rpcag
