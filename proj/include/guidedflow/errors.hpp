#pragma once

#include <stdexcept>

namespace guidedflow {

// Error taxonomy shared across the library. Operations throw the most
// specific type; everything derives from Error so callers can catch broadly.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct FormatError : Error { using Error::Error; };       // malformed bytes
struct RangeError : Error { using Error::Error; };        // value not representable in target format
struct ShapeError : Error { using Error::Error; };        // dimension mismatch
struct ConfigError : Error { using Error::Error; };       // invalid parameter
struct InsufficientData : Error { using Error::Error; };  // too little input to proceed
struct NoConsensus : Error { using Error::Error; };       // robust fit found no support
struct EmptyInput : Error { using Error::Error; };        // nothing to operate on
struct IOError : Error { using Error::Error; };           // filesystem failure

}  // namespace guidedflow
