#pragma once

#include <stdexcept>
#include <string>

namespace volreg {

struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error("dimension error: " + msg) {}
};

struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& msg) : std::runtime_error("parameter error: " + msg) {}
};

struct UnsupportedError : std::runtime_error {
    explicit UnsupportedError(const std::string& msg) : std::runtime_error("unsupported: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& msg) : std::runtime_error("i/o error: " + msg) {}
};

struct CorruptionError : std::runtime_error {
    explicit CorruptionError(const std::string& msg) : std::runtime_error("corrupt data: " + msg) {}
};

struct DegenerateInputError : std::runtime_error {
    explicit DegenerateInputError(const std::string& msg) : std::runtime_error("degenerate input: " + msg) {}
};

struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error("divergence: " + msg) {}
};

} // namespace volreg
