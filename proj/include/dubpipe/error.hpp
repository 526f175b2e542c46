#pragma once

#include <stdexcept>
#include <string>

namespace dubpipe {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed container or document.
class FormatError : public Error {
public:
    using Error::Error;
};

// Well-formed input in an encoding we do not handle.
class UnsupportedError : public Error {
public:
    using Error::Error;
};

class ArgumentError : public Error {
public:
    using Error::Error;
};

// No voiced frame survived pitch estimation.
class UnvoicedError : public Error {
public:
    using Error::Error;
};

// A statistic is undefined for the given data (zero variance, p_e = 1, ...).
class DegenerateError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace dubpipe
