#pragma once

#include <stdexcept>
#include <string>

namespace gapnet {

// Bad configuration (unknown key, invalid field value, incompatible checkpoint).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unusable input data (missing file, empty cloud, bad manifest).
class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed text input; carries the offending line number in the message.
class ParseError : public DataError {
public:
    explicit ParseError(const std::string& msg) : DataError(msg) {}
};

}  // namespace gapnet
