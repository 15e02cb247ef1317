#pragma once

#include <stdexcept>
#include <string>

namespace cafe {

// Root of all library-specific failures, so callers can catch one type.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// File or format problems while reading inputs.
struct ParseError : Error {
  using Error::Error;
};

// Inputs that parse but violate an invariant (bad treatment codes,
// misaligned prediction files, out-of-range propensities, ...).
struct ValidationError : Error {
  using Error::Error;
};

// A grouping rule produced an empty group or non-increasing cut points.
struct DegeneratePartitionError : Error {
  using Error::Error;
};

// A group lacks the minimum of two treated and two control units needed for
// the variance plug-in.
struct OccupancyError : Error {
  using Error::Error;
};

// A group's plug-in variance came out exactly zero (constant outcomes).
struct ZeroVarianceError : Error {
  using Error::Error;
};

// Iterative fit failed to converge or diverged.
struct ConvergenceError : Error {
  using Error::Error;
};

// Design matrix is rank deficient; the message names an offending term.
struct RankError : Error {
  using Error::Error;
};

}  // namespace cafe
