#pragma once

#include <stdexcept>
#include <string>

namespace gtn {

// Bad network/task/experiment configuration (wrong shapes, invalid fields).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// API misuse: calling an operation with state it cannot act on
// (backward before forward, mismatched recurrent state count, ...).
class UsageError : public std::runtime_error {
public:
    explicit UsageError(const std::string& msg) : std::runtime_error(msg) {}
};

// File I/O and checkpoint decoding failures.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace gtn
