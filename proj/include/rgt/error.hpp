#pragma once

#include <stdexcept>
#include <string>

namespace rgt {

// Shape/dimension disagreements between operands.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid hyperparameter combinations (divisibility, ranges, inconsistent flags).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// NaN/Inf escaping an operation, zero-variance inputs, non-finite losses.
class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// File and stream failures: bad magic, version, truncation, checksum, bad PPM.
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace rgt
