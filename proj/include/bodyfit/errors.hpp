#pragma once

#include <stdexcept>
#include <string>

namespace bodyfit {

// Shape/size disagreement between an operation's inputs.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Non-finite or otherwise unusable numeric input.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed on-disk bytes (bad magic, truncation, duplicate names, ...).
struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error(msg) {}
};

// A manifest or scenario that violates its documented constraints.
struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Geometric configuration for which the requested closed form does not exist.
struct DegeneracyError : std::runtime_error {
    explicit DegeneracyError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace bodyfit
