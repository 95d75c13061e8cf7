#pragma once

#include <stdexcept>
#include <string>

namespace coseg {

// Root of every exception thrown by the library. The CLI maps the three
// families (configuration, I/O, numerical) onto distinct exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    using Error::Error;
};

// Malformed or contradictory MetaImage header.
class FormatError : public IoError {
public:
    FormatError(const std::string& key, const std::string& what)
        : IoError("format error in header key '" + key + "': " + what), key_(key) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

class TruncationError : public IoError {
public:
    using IoError::IoError;
};

class DomainMismatchError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class DegenerateInputError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class SizeError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

class UndefinedMetricError : public Error {
public:
    using Error::Error;
};

class InversionError : public NumericalError {
public:
    using NumericalError::NumericalError;
};

}  // namespace coseg
