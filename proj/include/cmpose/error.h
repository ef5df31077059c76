#pragma once

#include <stdexcept>
#include <string>

namespace cmpose {

// Shape mismatch between tensors (bad matmul dims, concat widths, ...).
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

// Invalid configuration value (ratio outside [0,1], indivisible dims, unknown key).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

// Violated API contract (non-scalar loss, index out of range).
class ContractError : public std::runtime_error {
public:
    explicit ContractError(const std::string& msg) : std::runtime_error("contract error: " + msg) {}
};

// I/O failure (missing dataset, bad magic, truncated file).
class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& msg) : std::runtime_error("io error: " + msg) {}
};

}  // namespace cmpose
