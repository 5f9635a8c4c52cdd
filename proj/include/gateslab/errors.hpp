#pragma once

#include <stdexcept>
#include <string>

namespace gateslab {

// Error taxonomy. Each maps to one failure class so callers (and the CLI
// exit-code mapping) can tell configuration, data, and numeric faults apart.

struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ShapeError : Error {
  using Error::Error;
};

struct TraceError : Error {
  using Error::Error;
};

struct NumericsError : Error {
  using Error::Error;
};

struct SpaceError : Error {
  using Error::Error;
};

struct MutationError : Error {
  using Error::Error;
};

struct SizeError : Error {
  using Error::Error;
};

struct EmptyError : Error {
  using Error::Error;
};

struct SortError : Error {
  using Error::Error;
};

struct EvalError : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct UnsupportedError : Error {
  using Error::Error;
};

}  // namespace gateslab
