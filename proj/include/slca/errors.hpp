#pragma once

#include <stdexcept>
#include <string>

namespace slca {

// Rejected input: shapes, ranges, or config values that violate an op's
// preconditions.
class ShapeError : public std::invalid_argument {
public:
    explicit ShapeError(const std::string& msg) : std::invalid_argument(msg) {}
};

// Non-finite values or diverged computations.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed files: bad magic, truncation, checksum mismatch.
class FormatError : public std::runtime_error {
public:
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-system level failures (open/read/write).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace slca
