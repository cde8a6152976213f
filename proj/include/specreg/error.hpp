#pragma once

#include <stdexcept>
#include <string>

namespace specreg {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller supplied arguments that violate a precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// File could not be read, parsed, or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// A computation produced no meaningful result (empty region, zero variance, NaN).
class NumericError : public Error {
public:
    using Error::Error;
};

} // namespace specreg
