#pragma once

#include <stdexcept>
#include <string>

namespace ptft {

/// Base for all errors raised by the library. Messages are single-line so the
/// CLI can print them verbatim as its diagnostic.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A data structure or file violates one of its stated invariants.
class InvariantError : public Error {
public:
    using Error::Error;
};

/// Tensor shapes are incompatible for the requested operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// A NaN or infinity reached a place that requires finite values.
class NumericError : public Error {
public:
    using Error::Error;
};

}  // namespace ptft
