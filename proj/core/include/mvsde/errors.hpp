#pragma once

#include <stdexcept>
#include <string>

namespace mvsde {

/// Bad user input: malformed config, dimension mismatch, unknown system.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// API misuse: violated precondition (non-scalar backward root, empty population, ...).
struct UsageError : std::logic_error {
    explicit UsageError(const std::string& msg) : std::logic_error(msg) {}
};

/// Numerical failure at runtime: NaN loss, state blow-up, scale overflow.
struct NumericError : std::runtime_error {
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

/// File parse failure, carries a line number when one is known.
struct ParseError : std::runtime_error {
    explicit ParseError(const std::string& msg, long line = -1)
        : std::runtime_error(line >= 0 ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_number(line) {}
    long line_number;
};

}  // namespace mvsde
