#pragma once

#include <stdexcept>
#include <string>

namespace fedbary {

// Base class for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (bad instance file, bad weights,
// dimension mismatch, out-of-range parameters).  CLI maps this to exit 3.
class ValidationError : public Error {
 public:
  using Error::Error;
};

// Wire-protocol violations: truncated frames, unknown message types,
// handshake mismatches, timeouts, audit failures.  CLI maps this to exit 4.
class ProtocolError : public Error {
 public:
  explicit ProtocolError(const std::string& what, long byte_offset = -1)
      : Error(byte_offset >= 0
                  ? what + " (byte offset " + std::to_string(byte_offset) + ")"
                  : what),
        offset(byte_offset) {}
  long offset;  // offset into the frame/stream where decoding failed, -1 if n/a
};

// A requested computation exceeds a hard budget (e.g. exhaustive subset
// enumeration past the combination cap).
class BudgetError : public Error {
 public:
  using Error::Error;
};

// Numerical failure inside an iterative solver (non-finite values).
class SolverError : public Error {
 public:
  using Error::Error;
};

}  // namespace fedbary
