#pragma once

#include <stdexcept>
#include <string>

namespace cobra {

// Shape or size disagreement between tensors / buffers.
struct DimensionError : std::runtime_error {
    explicit DimensionError(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad hyperparameter or CLI/config value.
struct ParameterError : std::runtime_error {
    explicit ParameterError(const std::string& msg) : std::runtime_error(msg) {}
};

// Config file problems (unknown key, missing required key, unparsable value).
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Dataset / checkpoint file problems.
struct DataError : std::runtime_error {
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Violated call contract (non-scalar loss, label not in {0,1}, empty batch...).
struct ContractError : std::runtime_error {
    explicit ContractError(const std::string& msg) : std::runtime_error(msg) {}
};

// Index out of range in gather / selection ops.
struct IndexError : std::runtime_error {
    explicit IndexError(const std::string& msg) : std::runtime_error(msg) {}
};

// Unknown subject id at routing time.
struct RoutingError : std::runtime_error {
    explicit RoutingError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace cobra
