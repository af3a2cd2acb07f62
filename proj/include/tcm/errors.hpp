#pragma once

#include <stdexcept>
#include <string>

namespace tcm {

// Base of every error thrown by the library. CLI maps subclasses to exit codes.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Non-convergence, non-finite intermediates.
class NumericError : public Error {
public:
    using Error::Error;
};

// Caller broke a documented precondition.
class ContractError : public Error {
public:
    using Error::Error;
};

class SpecError : public Error {
public:
    using Error::Error;
};

// Invalid configuration; `key()` is the dotted path of the offending field.
class ConfigError : public Error {
public:
    ConfigError(std::string key, const std::string& what)
        : Error(key + ": " + what), key_(std::move(key)) {}
    const std::string& key() const noexcept { return key_; }

private:
    std::string key_;
};

// Data or checkpoint does not match the expected shape/spec.
class MismatchError : public Error {
public:
    using Error::Error;
};

} // namespace tcm
