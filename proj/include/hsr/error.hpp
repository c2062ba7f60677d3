#pragma once

#include <stdexcept>
#include <string>

namespace hsr {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Caller violated a documented precondition (bad argument, shape mismatch, ...).
class PreconditionError : public Error {
public:
    using Error::Error;
};

/// A file or byte stream could not be decoded. Carries human-readable context
/// (path, line or byte offset) in the message.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Persisted data uses a container revision this build does not understand.
class UnsupportedVersionError : public ParseError {
public:
    using ParseError::ParseError;
};

/// A remote endpoint could not be reached or timed out after retries.
class TransportError : public Error {
public:
    using Error::Error;
};

/// A remote endpoint answered with a malformed document.
class ProtocolError : public Error {
public:
    using Error::Error;
};

/// Optimization produced non-finite losses repeatedly and was aborted.
class DivergenceError : public Error {
public:
    using Error::Error;
};

} // namespace hsr
