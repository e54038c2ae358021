#pragma once

#include <stdexcept>
#include <string>

namespace sqac {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed textual input (event logs, corpora, embedding files, configs).
class ParseError : public Error {
public:
    using Error::Error;
};

/// Caller violated a precondition (bad argument, inconsistent shapes).
class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// Binary artifact failed integrity checks (truncated, bad CRC, bad magic).
class CorruptArtifact : public Error {
public:
    using Error::Error;
};

/// Binary artifact was written by an unsupported format version.
class VersionMismatch : public Error {
public:
    using Error::Error;
};

}  // namespace sqac
