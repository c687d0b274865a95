#pragma once

#include <stdexcept>
#include <string>

namespace sail {

/// Base of every error the library raises on bad input (files, shapes, configs).
/// Anything not derived from this is an internal failure.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

/// Bad magic, unknown dtype, malformed header.
class FormatError : public Error {
public:
    using Error::Error;
};

class VersionError : public Error {
public:
    using Error::Error;
};

class TruncatedError : public Error {
public:
    using Error::Error;
};

class ChecksumError : public Error {
public:
    ChecksumError(std::string path, unsigned expected, unsigned actual)
        : Error(path + ": CRC32 mismatch (expected " + hex(expected) + ", actual " + hex(actual) + ")"),
          expected_(expected), actual_(actual) {}

    unsigned expected() const noexcept { return expected_; }
    unsigned actual() const noexcept { return actual_; }

private:
    static std::string hex(unsigned v) {
        static constexpr char digits[] = "0123456789abcdef";
        std::string s = "0x00000000";
        for (int i = 9; i >= 2; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        return s;
    }

    unsigned expected_;
    unsigned actual_;
};

/// Non-finite values, out-of-range labels, inconsistent datasets.
class ValidationError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

/// Raised when training diverges (non-finite loss or gradient).
class TrainingError : public Error {
public:
    using Error::Error;
};

} // namespace sail
