#pragma once

#include <stdexcept>
#include <string>

namespace vecfont {

// Error classes map to CLI exit codes: usage/domain 2, parse 3, numeric 4, io 5.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error {
    ParseError(const std::string& msg, size_t byte_offset)
        : Error(msg + " (byte " + std::to_string(byte_offset) + ")"), offset(byte_offset) {}
    size_t offset;
};

struct UnsupportedCommandError : Error {
    using Error::Error;
};

// Glyph/representation structure violations (e.g. compact glyph not starting with Move).
struct StructureError : Error {
    using Error::Error;
};

struct ShapeError : Error {
    using Error::Error;
};

struct DomainError : Error {
    using Error::Error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct NumericError : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

}  // namespace vecfont
