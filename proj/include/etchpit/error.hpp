#pragma once

#include <stdexcept>
#include <string>

namespace etchpit {

/// Base class of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid configuration or parameters; the CLI maps it to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or inconsistent input data; the CLI maps it to exit code 3.
class DataError : public Error {
public:
    using Error::Error;
};

/// Binary/text exchange format violations.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

/// Image too small for the requested operation.
class SizingError : public DataError {
public:
    using DataError::DataError;
};

/// Caller broke an operation's precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
};

}  // namespace etchpit
