#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace oui {

// Base for every error the library raises. Each subclass maps onto one CLI
// exit code (see exit_code()).
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Batch too small for the metric (B < 2) or otherwise unusable.
class InvalidBatchError : public Error {
public:
    using Error::Error;
};

// Non-finite input where finite values are required.
class NumericError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Invalid network / grid / dataset specification.
class SpecError : public Error {
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

// Malformed file content. Carries the offending 1-based line number.
class ParseError : public IoError {
public:
    ParseError(const std::string& file, std::size_t line, const std::string& what)
        : IoError(file + ":" + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

// Training produced a non-finite value.
class DivergenceError : public Error {
public:
    using Error::Error;
};

namespace exit_codes {
inline constexpr int success    = 0;
inline constexpr int config     = 1;
inline constexpr int io         = 2;
inline constexpr int divergence = 3;
}  // namespace exit_codes

inline int exit_code(const Error& e) noexcept {
    if (dynamic_cast<const IoError*>(&e)) return exit_codes::io;
    if (dynamic_cast<const DivergenceError*>(&e)) return exit_codes::divergence;
    if (dynamic_cast<const NumericError*>(&e)) return exit_codes::divergence;
    return exit_codes::config;
}

}  // namespace oui
