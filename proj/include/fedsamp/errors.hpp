#pragma once

#include <stdexcept>
#include <string>

namespace fedsamp {

/// Base class for all library errors.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument values (sizes, ranges, non-positive parameters).
struct ArgumentError : Error {
  using Error::Error;
};

/// Matrix/vector dimensions do not match.
struct ShapeError : Error {
  using Error::Error;
};

/// Malformed input file contents (bad row, non-numeric field).
struct ParseError : Error {
  using Error::Error;
};

/// Structurally valid file that violates the dataset schema.
struct SchemaError : Error {
  using Error::Error;
};

/// A requested data partition cannot be constructed.
struct PartitionError : Error {
  using Error::Error;
};

/// Sampling probability vector violates its invariants.
struct SchemeError : Error {
  using Error::Error;
};

/// A round-protocol violation (e.g. a sampled client without an update).
struct ProtocolError : Error {
  using Error::Error;
};

/// Training produced a non-finite quantity.
struct DivergenceError : Error {
  DivergenceError(const std::string& what, int round, int step)
      : Error(what), round(round), step(step) {}
  int round;
  int step;
};

/// A precondition documented as a contract was violated by the caller.
struct ContractError : Error {
  using Error::Error;
};

/// Constrained subproblem has no feasible point for the given inputs.
struct InfeasibleError : Error {
  using Error::Error;
};

/// Parameter estimation from round measurements failed.
struct EstimationError : Error {
  using Error::Error;
};

}  // namespace fedsamp
