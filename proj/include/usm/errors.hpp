#pragma once

#include <stdexcept>
#include <string>

namespace usm {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failures: unreadable or unwritable paths.
class IoError : public Error {
public:
    using Error::Error;
};

/// Malformed container bytes.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Malformed text input (manifests, config files), usually with a line number.
class ParseError : public Error {
public:
    using Error::Error;
};

/// Unknown or out-of-range configuration values.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Inputs that are well-formed but inconsistent with each other.
class DataError : public Error {
public:
    using Error::Error;
};

}  // namespace usm
